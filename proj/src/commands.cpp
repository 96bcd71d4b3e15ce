#include "ulre/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <utility>

#include <json.hpp>

#include "ulre/checkpoint.hpp"
#include "ulre/config.hpp"
#include "ulre/errors.hpp"
#include "ulre/experiments.hpp"
#include "ulre/metrics.hpp"
#include "ulre/model.hpp"
#include "ulre/rng.hpp"
#include "ulre/synthetic.hpp"
#include "ulre/tensor_file.hpp"

namespace ulre {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

const std::set<std::string> kTrainKeys = {"epochs",     "learning_rate", "batch_size",     "adam_beta1",
                                          "adam_beta2", "adam_eps",      "early_stopping", "patience",
                                          "val_fraction", "seed"};

std::set<std::string> with_train_keys(std::set<std::string> keys) {
    keys.insert(kTrainKeys.begin(), kTrainKeys.end());
    return keys;
}

const std::map<std::string, std::set<std::string>, std::less<>>& key_table() {
    static const std::map<std::string, std::set<std::string>, std::less<>> table = {
        {"toy-gaussian",
         with_train_keys({"n_per_class", "mu0", "mu1", "hidden", "grid_min", "grid_max", "grid_step"})},
        {"train", with_train_keys({"features", "labels", "feature_record", "label_record", "head", "hidden", "slope"})},
        {"score", {"checkpoint", "features", "feature_record", "out_height", "out_width", "sigma", "head", "seed"}},
        {"eval", {"scores", "labels", "score_record", "label_record", "per_image", "seed"}},
        {"extrapolate",
         {"train_features", "train_class_ids", "features", "feature_record", "class_id_record", "checkpoint_edl",
          "checkpoint_bce", "bin_width", "n_classes", "ignore_class", "seed"}},
        {"gen-synthetic",
         {"height", "width", "dim", "n_id_classes", "n_scenes", "object_size", "scale_min", "scale_max",
          "min_angle_deg", "radius", "noise_sigma", "seed", "world_seed", "outlier"}},
    };
    return table;
}

// ---------------------------------------------------------------------------
// Config helpers

std::size_t positive_size(const ExperimentConfig& cfg, const std::string& key, std::size_t fallback) {
    const std::int64_t v = cfg.get_int(key, static_cast<std::int64_t>(fallback));
    if (v <= 0) throw ConfigError("config key '" + key + "' must be a positive integer");
    return static_cast<std::size_t>(v);
}

double positive_double(const ExperimentConfig& cfg, const std::string& key, double fallback) {
    const double v = cfg.get_double(key, fallback);
    if (!(v > 0.0)) throw ConfigError("config key '" + key + "' must be positive");
    return v;
}

TrainConfig train_config(const ExperimentConfig& cfg, TrainConfig t) {
    t.epochs = static_cast<int>(positive_size(cfg, "epochs", static_cast<std::size_t>(t.epochs)));
    t.learning_rate = cfg.get_double("learning_rate", t.learning_rate);
    t.batch_size = positive_size(cfg, "batch_size", t.batch_size);
    t.adam_beta1 = cfg.get_double("adam_beta1", t.adam_beta1);
    t.adam_beta2 = cfg.get_double("adam_beta2", t.adam_beta2);
    t.adam_eps = cfg.get_double("adam_eps", t.adam_eps);
    t.early_stopping.enabled = cfg.get_bool("early_stopping", t.early_stopping.enabled);
    t.early_stopping.patience =
        static_cast<int>(positive_size(cfg, "patience", static_cast<std::size_t>(t.early_stopping.patience)));
    t.early_stopping.val_fraction = cfg.get_double("val_fraction", t.early_stopping.val_fraction);
    t.seed = cfg.get_u64("seed", t.seed);
    try {
        t.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return t;
}

std::vector<fs::path> input_paths(const ExperimentConfig& cfg, const std::string& key, bool required = true) {
    std::vector<fs::path> out;
    for (const std::string& s : cfg.get_list(key)) {
        fs::path p(s);
        if (!fs::is_regular_file(p)) throw ConfigError("config key '" + key + "': no such file: " + s);
        out.push_back(std::move(p));
    }
    if (required && out.empty()) throw ConfigError("missing required config key '" + key + "'");
    return out;
}

fs::path single_input(const ExperimentConfig& cfg, const std::string& key) {
    const auto paths = input_paths(cfg, key);
    if (paths.size() != 1) throw ConfigError("config key '" + key + "' takes exactly one path");
    return paths.front();
}

// ---------------------------------------------------------------------------
// Input loading

struct LoadedTensor {
    fs::path path;
    TensorRecord record;
};

LoadedTensor load_record(const fs::path& path, const std::string& name) {
    const auto records = read_tensor_file(path);
    try {
        return {path, find_record(records, name)};
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// Feature record as an N x D matrix plus its spatial shape (H, W), or (N, 1)
// for a record that is already a matrix.
struct FeatureInput {
    fs::path path;
    Tensor rows;
    std::size_t height = 0;
    std::size_t width = 0;
};

FeatureInput load_features(const fs::path& path, const std::string& name) {
    const LoadedTensor lt = load_record(path, name);
    if (lt.record.dtype() != DType::f64) throw DataError(path.string() + ": record '" + name + "' is not f64");
    const Tensor t = lt.record.to_tensor();
    FeatureInput in{path, Tensor{}, 0, 0};
    if (t.rank() == 3) {
        FeatureMap checked(t);  // validates finiteness and non-empty dims
        in.height = t.dim(0);
        in.width = t.dim(1);
        in.rows = checked.flattened();
    } else if (t.rank() == 2) {
        if (!t.all_finite()) throw DataError(path.string() + ": record '" + name + "' has non-finite values");
        in.height = t.dim(0);
        in.width = 1;
        in.rows = t;
    } else {
        throw ShapeError(path.string() + ": record '" + name + "' must be H x W x D or N x D");
    }
    if (in.rows.dim(0) == 0 || in.rows.dim(1) == 0)
        throw ShapeError(path.string() + ": record '" + name + "' is empty");
    return in;
}

struct ByteInput {
    fs::path path;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> values;
};

ByteInput load_bytes(const fs::path& path, const std::string& name) {
    LoadedTensor lt = load_record(path, name);
    if (lt.record.dtype() != DType::u8) throw DataError(path.string() + ": record '" + name + "' is not u8");
    return {path, lt.record.dims, lt.record.bytes()};
}

ByteInput load_labels(const fs::path& path, const std::string& name) {
    ByteInput in = load_bytes(path, name);
    try {
        require_binary_labels(in.values);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return in;
}

// Labels must cover the same pixels as the features they pair with.
void check_pairing(const FeatureInput& f, const ByteInput& l, const std::string& what) {
    if (l.values.size() != f.rows.dim(0))
        throw ShapeError(l.path.string() + ": " + what + " has " + std::to_string(l.values.size()) +
                         " entries but " + f.path.string() + " has " + std::to_string(f.rows.dim(0)) + " rows");
    if (l.dims.size() == 2 && f.width > 1 && (l.dims[0] != f.height || l.dims[1] != f.width))
        throw ShapeError(l.path.string() + ": " + what + " shape differs from " + f.path.string());
}

Tensor stack_rows(const std::vector<FeatureInput>& inputs) {
    const std::size_t d = inputs.front().rows.dim(1);
    std::size_t n = 0;
    for (const auto& in : inputs) {
        if (in.rows.dim(1) != d)
            throw ShapeError(in.path.string() + ": feature dim " + std::to_string(in.rows.dim(1)) +
                             " differs from " + std::to_string(d) + " in " + inputs.front().path.string());
        n += in.rows.dim(0);
    }
    Tensor out = Tensor::matrix(n, d);
    auto it = out.values().begin();
    for (const auto& in : inputs) it = std::copy(in.rows.values().begin(), in.rows.values().end(), it);
    return out;
}

// ---------------------------------------------------------------------------
// Outputs are staged in memory and written only once the command succeeded.

class OutputSet {
public:
    void add(const std::string& name, std::vector<std::uint8_t> bytes) { files_.emplace_back(name, std::move(bytes)); }
    void add_text(const std::string& name, const std::string& text) { add(name, {text.begin(), text.end()}); }
    void add_records(const std::string& name, const std::vector<TensorRecord>& records) {
        add(name, encode_tensor_file(records));
    }

    void write(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg, const ojson& extra,
               std::ostream& log) const {
        fs::create_directories(dir);
        ojson outputs = ojson::object();
        for (const auto& [name, bytes] : files_) {
            write_file_bytes(dir / name, bytes);
            outputs[name] = sha256_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
            log << "wrote " << (dir / name).string() << "\n";
        }
        ojson manifest;
        manifest["command"] = command;
        manifest["code_version"] = std::string(kCodeVersion);
        manifest["config_sha256"] = sha256_hex(cfg.canonical());
        manifest["config"] = cfg.values();
        for (const auto& [k, v] : extra.items()) manifest[k] = v;
        manifest["outputs"] = outputs;
        const std::string text = manifest.dump(2) + "\n";
        write_file_bytes(dir / "manifest.json", {text.begin(), text.end()});
        log << "wrote " << (dir / "manifest.json").string() << "\n";
    }

private:
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> files_;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string indexed(const std::string& stem, std::size_t i, const std::string& ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%03zu", i);
    return stem + buf + ext;
}

ojson report_json(const TrainReport& r) {
    ojson j;
    j["epochs_run"] = r.epochs_run;
    j["best_epoch"] = r.best_epoch;
    j["stopped_epoch"] = r.stopped_epoch;
    j["stopped_early"] = r.stopped_early;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["lambda"] = r.lambda;
    return j;
}

ojson detection_json(const DetectionMetrics& m) { return ojson::parse(metrics_json(m)); }

// ---------------------------------------------------------------------------
// Subcommands

void cmd_toy_gaussian(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    ToyConfig toy;
    toy.n_per_class = positive_size(cfg, "n_per_class", toy.n_per_class);
    toy.mu0 = cfg.get_double("mu0", toy.mu0);
    toy.mu1 = cfg.get_double("mu1", toy.mu1);
    toy.hidden = positive_size(cfg, "hidden", toy.hidden);
    toy.grid_min = cfg.get_double("grid_min", toy.grid_min);
    toy.grid_max = cfg.get_double("grid_max", toy.grid_max);
    toy.grid_step = positive_double(cfg, "grid_step", toy.grid_step);
    if (!(toy.grid_max >= toy.grid_min)) throw ConfigError("grid_max must not be below grid_min");
    toy.train = train_config(cfg, toy.train);

    log << "toy-gaussian: training both heads on " << 2 * toy.n_per_class << " samples\n";
    const ToyResult r = run_toy_gaussian(toy);

    std::string csv = "x,p_edl,vacuity,p_bce,entropy_bce,lr_edl,lr_true\n";
    for (const ToyGridRow& row : r.grid)
        csv += fmt(row.x) + "," + fmt(row.p_edl) + "," + fmt(row.vacuity) + "," + fmt(row.p_bce) + "," +
               fmt(row.entropy_bce) + "," + fmt(row.lr_edl) + "," + fmt(row.lr_true) + "\n";

    ojson summary;
    summary["p_edl_at_0"] = r.summary.p_edl_at_0;
    summary["vacuity_at_0"] = r.summary.vacuity_at_0;
    summary["vacuity_at_neg6"] = r.summary.vacuity_at_neg6;
    summary["vacuity_at_pos6"] = r.summary.vacuity_at_pos6;
    summary["log_lr_slope"] = r.summary.log_lr_slope;
    summary["p_bce_at_6"] = r.summary.p_bce_at_6;
    summary["p_edl_at_6"] = r.summary.p_edl_at_6;
    summary["edl_training"] = report_json(r.edl.report);
    summary["bce_training"] = report_json(r.bce.report);

    OutputSet files;
    files.add_text("toy_grid.csv", csv);
    files.add_text("toy_summary.json", summary.dump(2) + "\n");
    files.add_records("edl_checkpoint.ulre", model_to_records(r.edl.model));
    files.add_records("bce_checkpoint.ulre", model_to_records(r.bce.model));
    files.write(out, "toy-gaussian", cfg, ojson{{"learning_rate", toy.train.learning_rate}}, log);
}

void cmd_gen_synthetic(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    PipelineConfig p;
    p.height = positive_size(cfg, "height", p.height);
    p.width = positive_size(cfg, "width", p.width);
    p.dim = positive_size(cfg, "dim", p.dim);
    if (p.dim < 2) throw ConfigError("config key 'dim' must be at least 2");
    p.n_id_classes = positive_size(cfg, "n_id_classes", p.n_id_classes);
    p.object_size = positive_size(cfg, "object_size", p.object_size);
    p.mix.scale_min = positive_double(cfg, "scale_min", p.mix.scale_min);
    p.mix.scale_max = positive_double(cfg, "scale_max", p.mix.scale_max);
    if (p.mix.scale_max < p.mix.scale_min) throw ConfigError("scale_max must not be below scale_min");
    p.min_angle_deg = cfg.get_double("min_angle_deg", p.min_angle_deg);
    if (!(p.min_angle_deg >= 0.0 && p.min_angle_deg <= 180.0))
        throw ConfigError("config key 'min_angle_deg' must lie in [0, 180]");
    p.radius = positive_double(cfg, "radius", p.radius);
    p.noise_sigma = cfg.get_double("noise_sigma", p.noise_sigma);
    if (!(p.noise_sigma >= 0.0)) throw ConfigError("config key 'noise_sigma' must be non-negative");
    const std::size_t n_scenes = positive_size(cfg, "n_scenes", 1);
    const std::uint64_t seed = cfg.get_u64("seed", 0);
    p.seed = cfg.get_u64("world_seed", 0);
    const std::string outlier = cfg.get_string("outlier", "proxy");
    if (outlier != "proxy" && outlier != "test" && outlier != "none")
        throw ConfigError("config key 'outlier' must be proxy, test, or none");
    if (p.n_id_classes > 254) throw ConfigError("at most 254 in-distribution classes are supported");

    SyntheticWorld world;
    std::vector<double> test_direction;
    try {
        world = pipeline_world(p);
        if (outlier == "test") test_direction = pipeline_test_direction(world, p);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("infeasible synthetic world: ") + e.what());
    }

    const Rng root(seed);
    OutputSet files;
    for (std::size_t i = 0; i < n_scenes; ++i) {
        const std::uint64_t scene_seed = root.split(i).seed();
        Tensor features;
        std::vector<std::uint8_t> labels;
        std::vector<std::uint8_t> class_ids;
        if (outlier == "none") {
            Scene s = gen_synthetic_scene(world, p.height, p.width, scene_seed);
            features = s.features.data();
            labels.assign(s.class_ids.size(), 0);
            class_ids = std::move(s.class_ids);
        } else {
            CompositedScene s = outlier == "proxy" ? make_proxy_scene(world, p, scene_seed)
                                                   : make_composited_scene(world, p, test_direction, scene_seed);
            features = s.features.data();
            labels = s.labels.values();
            class_ids = std::move(s.class_ids);
        }
        files.add_records(indexed("scene", i, ".ulre"),
                          {TensorRecord::from_tensor("features", features),
                           TensorRecord::from_bytes("labels", {p.height, p.width}, std::move(labels)),
                           TensorRecord::from_bytes("class_ids", {p.height, p.width}, std::move(class_ids))});
    }
    log << "gen-synthetic: " << n_scenes << " scene(s), outlier=" << outlier << "\n";
    files.write(out, "gen-synthetic", cfg, ojson::object(), log);
}

void cmd_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto feature_paths = input_paths(cfg, "features");
    const auto label_paths = input_paths(cfg, "labels");
    if (feature_paths.size() != label_paths.size())
        throw ConfigError("'features' and 'labels' must list the same number of files");
    const HeadKind head = head_from_string(cfg.get_string("head", "evidential"));
    const std::vector<std::size_t> hidden = cfg.get_sizes("hidden", {256, 64});
    const double slope = cfg.get_double("slope", kDefaultLeakySlope);
    if (!(slope >= 0.0 && slope < 1.0)) throw ConfigError("config key 'slope' must lie in [0, 1)");
    TrainConfig tc;
    tc.head = head;
    tc = train_config(cfg, tc);
    const std::string feature_record = cfg.get_string("feature_record", "features");
    const std::string label_record = cfg.get_string("label_record", "labels");

    std::vector<FeatureInput> features;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < feature_paths.size(); ++i) {
        features.push_back(load_features(feature_paths[i], feature_record));
        const ByteInput l = load_labels(label_paths[i], label_record);
        check_pairing(features.back(), l, "labels");
        labels.insert(labels.end(), l.values.begin(), l.values.end());
    }
    const Tensor rows = stack_rows(features);
    if (rows.dim(0) < tc.batch_size)
        throw DataError("training set has " + std::to_string(rows.dim(0)) + " rows, fewer than batch_size " +
                        std::to_string(tc.batch_size));

    std::vector<std::size_t> dims{rows.dim(1)};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(head_width(head));
    log << "train: " << rows.dim(0) << " rows, " << to_string(head) << " head, " << tc.epochs << " epochs\n";
    const TrainResult r = train(init_model(dims, Rng(tc.seed).split(0).seed(), head, slope), rows, labels, tc);

    OutputSet files;
    files.add_records("checkpoint.ulre", model_to_records(r.model));
    files.add_text("train_report.json", report_json(r.report).dump(2) + "\n");
    files.write(out, "train", cfg, ojson{{"learning_rate", tc.learning_rate}}, log);
}

EstimatorModel load_model_checked(const fs::path& path, std::optional<HeadKind> expected) {
    EstimatorModel m = load_checkpoint(path);
    if (expected && *expected != m.head)
        throw ConfigError("head '" + std::string(to_string(*expected)) + "' does not match checkpoint " +
                          path.string() + " (" + std::string(to_string(m.head)) + ")");
    return m;
}

void cmd_score(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const fs::path ckpt = single_input(cfg, "checkpoint");
    const auto feature_paths = input_paths(cfg, "features");
    const std::string feature_record = cfg.get_string("feature_record", "features");
    const double sigma = positive_double(cfg, "sigma", 1.0);
    std::optional<HeadKind> head;
    if (cfg.has("head")) head = head_from_string(cfg.require_string("head"));
    const bool fixed_h = cfg.has("out_height");
    const bool fixed_w = cfg.has("out_width");
    if (fixed_h != fixed_w) throw ConfigError("'out_height' and 'out_width' must be given together");
    const std::size_t out_h = fixed_h ? positive_size(cfg, "out_height", 1) : 0;
    const std::size_t out_w = fixed_w ? positive_size(cfg, "out_width", 1) : 0;

    const EstimatorModel model = load_model_checked(ckpt, head);
    std::vector<FeatureMap> maps;
    for (const fs::path& p : feature_paths) {
        const LoadedTensor lt = load_record(p, feature_record);
        if (lt.record.dtype() != DType::f64) throw DataError(p.string() + ": record '" + feature_record + "' is not f64");
        FeatureMap fm(lt.record.to_tensor());
        if (fm.dim() != model.input_dim())
            throw ShapeError(p.string() + ": feature dim " + std::to_string(fm.dim()) + " but checkpoint expects " +
                             std::to_string(model.input_dim()));
        maps.push_back(std::move(fm));
    }

    OutputSet files;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const ScoreMap raw(lr_map(predict_map(model, maps[i])));
        const ScoreMap post = postprocess_scores(raw, fixed_h ? out_h : raw.height(), fixed_w ? out_w : raw.width(), sigma);
        files.add_records(indexed("scores", i, ".ulre"), {TensorRecord::from_tensor("scores", post.scores())});
    }
    log << "score: " << maps.size() << " map(s) with " << to_string(model.head) << " checkpoint\n";
    files.write(out, "score", cfg, ojson::object(), log);
}

void cmd_eval(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto score_paths = input_paths(cfg, "scores");
    const auto label_paths = input_paths(cfg, "labels");
    if (score_paths.size() != label_paths.size())
        throw ConfigError("'scores' and 'labels' must list the same number of files");
    const std::string score_record = cfg.get_string("score_record", "scores");
    const std::string label_record = cfg.get_string("label_record", "labels");
    const bool per_image = cfg.get_bool("per_image", false);

    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    ojson images = ojson::array();
    for (std::size_t i = 0; i < score_paths.size(); ++i) {
        const LoadedTensor s = load_record(score_paths[i], score_record);
        if (s.record.dtype() != DType::f64) throw DataError(score_paths[i].string() + ": scores are not f64");
        const ScoreMap map(s.record.to_tensor());
        const ByteInput l = load_labels(label_paths[i], label_record);
        if (l.dims.size() != 2 || l.dims[0] != map.height() || l.dims[1] != map.width())
            throw ShapeError(label_paths[i].string() + ": label shape differs from scores in " +
                             score_paths[i].string());
        const auto& v = map.scores().values();
        if (per_image) {
            ojson entry;
            entry["scores"] = score_paths[i].string();
            entry["labels"] = label_paths[i].string();
            const std::size_t pos = std::count(l.values.begin(), l.values.end(), 1);
            if (pos == 0 || pos == l.values.size()) {
                entry["ap"] = nullptr;
                entry["fpr95"] = nullptr;
                entry["n_pos"] = pos;
                entry["n_neg"] = l.values.size() - pos;
            } else {
                const ojson m = detection_json(evaluate_detection(v, l.values));
                for (const auto& [k, val] : m.items()) entry[k] = val;
            }
            images.push_back(entry);
        }
        scores.insert(scores.end(), v.begin(), v.end());
        labels.insert(labels.end(), l.values.begin(), l.values.end());
    }
    const DetectionMetrics m = evaluate_detection(scores, labels);
    ojson result = detection_json(m);
    if (per_image) result["per_image"] = images;
    log << "eval: ap=" << m.ap << " fpr95=" << m.fpr95 << " over " << labels.size() << " pixels\n";

    OutputSet files;
    files.add_text("metrics.json", result.dump(2) + "\n");
    files.write(out, "eval", cfg, ojson::object(), log);
}

void cmd_extrapolate(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto train_paths = input_paths(cfg, "train_features");
    const auto id_paths = input_paths(cfg, "train_class_ids");
    if (train_paths.size() != id_paths.size())
        throw ConfigError("'train_features' and 'train_class_ids' must list the same number of files");
    const auto probe_paths = input_paths(cfg, "features");
    std::vector<std::pair<std::string, fs::path>> checkpoints;
    if (cfg.has("checkpoint_edl")) checkpoints.emplace_back("edl", single_input(cfg, "checkpoint_edl"));
    if (cfg.has("checkpoint_bce")) checkpoints.emplace_back("bce", single_input(cfg, "checkpoint_bce"));
    if (checkpoints.empty()) throw ConfigError("give 'checkpoint_edl', 'checkpoint_bce', or both");
    const double bin_width = positive_double(cfg, "bin_width", kDefaultBinWidth);
    const std::string feature_record = cfg.get_string("feature_record", "features");
    const std::string id_record = cfg.get_string("class_id_record", "class_ids");
    const std::int64_t ignore = cfg.get_int("ignore_class", kOutlierClassId);
    const std::int64_t n_classes = cfg.get_int("n_classes", 0);
    if (n_classes < 0) throw ConfigError("config key 'n_classes' must be non-negative");

    std::vector<FeatureInput> train_inputs;
    std::vector<std::uint8_t> ids;
    for (std::size_t i = 0; i < train_paths.size(); ++i) {
        train_inputs.push_back(load_features(train_paths[i], feature_record));
        const ByteInput b = load_bytes(id_paths[i], id_record);
        check_pairing(train_inputs.back(), b, "class ids");
        ids.insert(ids.end(), b.values.begin(), b.values.end());
    }
    for (std::int64_t k = 0; k < n_classes; ++k) {
        if (std::find(ids.begin(), ids.end(), static_cast<std::uint8_t>(k)) == ids.end())
            throw DataError("class " + std::to_string(k) + " is missing from the training class ids");
    }
    const Tensor train_rows = stack_rows(train_inputs);
    std::vector<FeatureInput> probe_inputs;
    for (const fs::path& p : probe_paths) probe_inputs.push_back(load_features(p, feature_record));
    const Tensor probes = stack_rows(probe_inputs);
    if (probes.dim(1) != train_rows.dim(1)) throw ShapeError("probe and training feature dims differ");

    std::vector<std::pair<std::string, EstimatorModel>> models;
    for (const auto& [name, path] : checkpoints) {
        EstimatorModel m = load_checkpoint(path);
        if (m.input_dim() != probes.dim(1))
            throw ShapeError(path.string() + ": checkpoint expects feature dim " + std::to_string(m.input_dim()));
        models.emplace_back(name, std::move(m));
    }
    const ClassMeans means = class_means(train_rows, ids, static_cast<int>(ignore));

    OutputSet files;
    ojson summary;
    summary["n_probes"] = probes.dim(0);
    for (const auto& [name, model] : models) {
        const std::vector<double> probs = ood_probabilities(model, probes);
        const BinnedAnalysis a = extrapolation_analysis(probes, means, probs, bin_width);
        files.add_text("binned_" + name + ".csv", binned_csv(a));
        const auto far = std::find_if(a.bins.rbegin(), a.bins.rend(), [](const DistanceBin& b) { return b.has_mean; });
        ojson h;
        h["mean_prob"] = std::accumulate(probs.begin(), probs.end(), 0.0) / static_cast<double>(probs.size());
        h["far_bin_lo"] = far->lo;
        h["far_bin_hi"] = far->hi;
        h["far_bin_mean_prob"] = far->mean_prob;
        summary[name] = h;
    }
    files.add_text("extrapolation_summary.json", summary.dump(2) + "\n");
    log << "extrapolate: " << probes.dim(0) << " probes against " << means.classes.size() << " class means\n";
    files.write(out, "extrapolate", cfg, ojson::object(), log);
}

using Handler = void (*)(const ExperimentConfig&, const fs::path&, std::ostream&);

Handler handler_for(std::string_view name) {
    if (name == "toy-gaussian") return cmd_toy_gaussian;
    if (name == "train") return cmd_train;
    if (name == "score") return cmd_score;
    if (name == "eval") return cmd_eval;
    if (name == "extrapolate") return cmd_extrapolate;
    if (name == "gen-synthetic") return cmd_gen_synthetic;
    throw ConfigError("unknown subcommand '" + std::string(name) + "'");
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"toy-gaussian", "gen-synthetic", "train",
                                                   "score",        "eval",          "extrapolate"};
    return names;
}

const std::set<std::string>& command_keys(std::string_view name) {
    const auto it = key_table().find(name);
    if (it == key_table().end()) throw ConfigError("unknown subcommand '" + std::string(name) + "'");
    return it->second;
}

void run_command(std::string_view name, const CommandOptions& options, std::ostream& log) {
    const Handler handler = handler_for(name);
    if (options.out.empty()) throw ConfigError("an output directory is required");
    if (fs::exists(options.out) && !fs::is_directory(options.out))
        throw ConfigError("output path exists and is not a directory: " + options.out.string());
    ExperimentConfig cfg = options.config.empty() ? ExperimentConfig(command_keys(name))
                                                  : ExperimentConfig::load(options.config, command_keys(name));
    if (options.seed) cfg.set("seed", std::to_string(*options.seed));
    handler(cfg, options.out, log);
}

ExitCode exit_code_for(const std::exception& error) noexcept {
    if (dynamic_cast<const ConfigError*>(&error)) return ExitCode::config;
    if (dynamic_cast<const NumericalError*>(&error)) return ExitCode::numerical;
    if (dynamic_cast<const DataError*>(&error) || dynamic_cast<const ShapeError*>(&error) ||
        dynamic_cast<const DomainError*>(&error))
        return ExitCode::data;
    return ExitCode::data;
}

int run_command_guarded(std::string_view name, const CommandOptions& options, std::ostream& log, std::ostream& err) {
    try {
        run_command(name, options, log);
        return static_cast<int>(ExitCode::ok);
    } catch (const std::exception& e) {
        const ExitCode code = exit_code_for(e);
        const char* kind = code == ExitCode::config      ? "config error"
                           : code == ExitCode::numerical ? "numerical failure"
                                                         : "data error";
        err << "ulre " << name << ": " << kind << ": " << e.what() << "\n";
        return static_cast<int>(code);
    }
}

}  // namespace ulre
