#include "ulre/checkpoint.hpp"

#include <json.hpp>

#include "ulre/errors.hpp"

namespace ulre {

std::vector<TensorRecord> model_to_records(const EstimatorModel& model) {
    model.validate();
    nlohmann::json header = {
        {"format_version", kCheckpointFormatVersion},
        {"layer_dims", model.layer_dims},
        {"slope", model.slope},
        {"head", std::string(to_string(model.head))},
    };
    const std::string text = header.dump();
    std::vector<TensorRecord> records;
    records.push_back(TensorRecord::from_bytes("header", {text.size()},
                                               std::vector<std::uint8_t>(text.begin(), text.end())));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const DenseLayer& layer = model.layers[l];
        const std::string prefix = "layer" + std::to_string(l);
        records.push_back(TensorRecord::from_tensor(prefix + ".weight", layer.weight));
        records.push_back(TensorRecord::from_tensor(prefix + ".bias", Tensor({layer.bias.size()}, layer.bias)));
    }
    return records;
}

EstimatorModel model_from_records(const std::vector<TensorRecord>& records) {
    const std::vector<std::uint8_t>& raw = find_record(records, "header").bytes();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(raw.begin(), raw.end());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    EstimatorModel model;
    try {
        const int version = header.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw DataError("unsupported checkpoint format version " + std::to_string(version));
        }
        model.layer_dims = header.at("layer_dims").get<std::vector<std::size_t>>();
        model.slope = header.at("slope").get<double>();
        model.head = head_from_string(header.at("head").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("malformed checkpoint header: ") + e.what());
    }
    if (model.layer_dims.size() < 2) throw DataError("checkpoint header lists fewer than two layer widths");

    for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        Tensor weight = find_record(records, prefix + ".weight").to_tensor();
        Tensor bias = find_record(records, prefix + ".bias").to_tensor();
        model.layers.push_back({std::move(weight), bias.values()});
    }
    try {
        model.validate();
    } catch (const ShapeError& e) {
        throw DataError(std::string("inconsistent checkpoint: ") + e.what());
    }
    return model;
}

void save_checkpoint(const std::filesystem::path& path, const EstimatorModel& model) {
    write_tensor_file(path, model_to_records(model));
}

EstimatorModel load_checkpoint(const std::filesystem::path& path) {
    try {
        return model_from_records(read_tensor_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace ulre
