#include "ulre/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "ulre/errors.hpp"

namespace ulre {
namespace {

constexpr char kMagic[4] = {'U', 'L', 'R', 'E'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto bits = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>(bits & 0xFF));
        bits = static_cast<U>(bits >> 8);
    }
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void need(std::size_t n, const std::string& what) const {
        if (remaining() < n) {
            std::ostringstream msg;
            msg << "truncated tensor file: " << what << " needs " << n << " bytes at offset " << pos_
                << ", only " << remaining() << " remain";
            throw DataError(msg.str());
        }
    }

    template <typename T>
    T get_le(const std::string& what) {
        need(sizeof(T), what);
        std::make_unsigned_t<T> v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(bytes_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    const std::uint8_t* take(std::size_t n, const std::string& what) {
        need(n, what);
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::string record_label(std::size_t index, const std::string& name) {
    std::ostringstream s;
    s << "record " << index;
    if (!name.empty()) s << " ('" << name << "')";
    return s.str();
}

}  // namespace

std::size_t TensorRecord::element_count() const noexcept {
    std::size_t n = 1;
    for (std::uint64_t d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

TensorRecord TensorRecord::from_tensor(std::string name, const Tensor& t) {
    TensorRecord r;
    r.name = std::move(name);
    r.dims.assign(t.shape().begin(), t.shape().end());
    r.payload = t.values();
    return r;
}

TensorRecord TensorRecord::from_bytes(std::string name, std::vector<std::uint64_t> dims,
                                      std::vector<std::uint8_t> bytes) {
    TensorRecord r;
    r.name = std::move(name);
    r.dims = std::move(dims);
    r.payload = std::move(bytes);
    if (r.element_count() != r.bytes().size()) {
        throw ShapeError("record '" + r.name + "': payload length does not match dims");
    }
    return r;
}

Tensor TensorRecord::to_tensor() const {
    if (dtype() != DType::f64) throw DataError("record '" + name + "' is u8, expected f64");
    std::vector<std::size_t> shape(dims.begin(), dims.end());
    return Tensor(std::move(shape), std::get<0>(payload));
}

const std::vector<std::uint8_t>& TensorRecord::bytes() const {
    if (dtype() != DType::u8) throw DataError("record '" + name + "' is f64, expected u8");
    return std::get<1>(payload);
}

std::vector<std::uint8_t> encode_tensor_file(const std::vector<TensorRecord>& records) {
    if (records.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw DataError("tensor file holds at most 65535 records");
    }
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint16_t>(out, kTensorFileVersion);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(records.size()));
    for (const TensorRecord& r : records) {
        if (r.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw DataError("record name longer than 65535 bytes");
        }
        if (r.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
            throw DataError("record '" + r.name + "' has rank above 255");
        }
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
        out.insert(out.end(), r.name.begin(), r.name.end());
        out.push_back(static_cast<std::uint8_t>(r.dtype()));
        out.push_back(static_cast<std::uint8_t>(r.dims.size()));
        for (std::uint64_t d : r.dims) put_le<std::uint64_t>(out, d);
        if (r.dtype() == DType::f64) {
            const auto& values = std::get<0>(r.payload);
            if (values.size() != r.element_count()) {
                throw ShapeError("record '" + r.name + "': payload length does not match dims");
            }
            for (double v : values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        } else {
            const auto& values = std::get<1>(r.payload);
            if (values.size() != r.element_count()) {
                throw ShapeError("record '" + r.name + "': payload length does not match dims");
            }
            out.insert(out.end(), values.begin(), values.end());
        }
    }
    return out;
}

std::vector<TensorRecord> decode_tensor_file(const std::vector<std::uint8_t>& bytes) {
    Reader in(bytes);
    const std::uint8_t* magic = in.take(4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a tensor file: bad magic");
    const auto version = in.get_le<std::uint16_t>("version");
    if (version != kTensorFileVersion) {
        throw DataError("unsupported tensor file version " + std::to_string(version));
    }
    const auto count = in.get_le<std::uint16_t>("record count");

    std::vector<TensorRecord> records;
    records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        TensorRecord r;
        const auto name_len = in.get_le<std::uint16_t>(record_label(i, "") + " name length");
        const std::uint8_t* name = in.take(name_len, record_label(i, "") + " name");
        r.name.assign(reinterpret_cast<const char*>(name), name_len);
        const std::string where = record_label(i, r.name);

        const auto dtype = in.get_le<std::uint8_t>(where + " dtype");
        if (dtype > 1) {
            throw DataError(where + ": unknown dtype code " + std::to_string(dtype) + " at offset " +
                            std::to_string(in.offset() - 1));
        }
        const auto rank = in.get_le<std::uint8_t>(where + " rank");
        std::size_t count_elems = 1;
        for (std::size_t k = 0; k < rank; ++k) {
            const auto d = in.get_le<std::uint64_t>(where + " dim " + std::to_string(k));
            r.dims.push_back(d);
            if (d != 0 && count_elems > std::numeric_limits<std::size_t>::max() / d) {
                throw DataError(where + ": dims overflow");
            }
            count_elems *= static_cast<std::size_t>(d);
        }
        const std::size_t elem_size = dtype == 0 ? 8 : 1;
        if (count_elems > std::numeric_limits<std::size_t>::max() / elem_size) {
            throw DataError(where + ": payload size overflow");
        }
        const std::uint8_t* payload = in.take(count_elems * elem_size, where + " payload");
        if (dtype == 0) {
            std::vector<double> values(count_elems);
            for (std::size_t e = 0; e < count_elems; ++e) {
                std::uint64_t bits = 0;
                for (std::size_t b = 0; b < 8; ++b) bits |= std::uint64_t{payload[8 * e + b]} << (8 * b);
                values[e] = std::bit_cast<double>(bits);
            }
            r.payload = std::move(values);
        } else {
            r.payload = std::vector<std::uint8_t>(payload, payload + count_elems);
        }
        records.push_back(std::move(r));
    }
    if (in.remaining() != 0) {
        throw DataError("tensor file has " + std::to_string(in.remaining()) +
                        " trailing bytes after the last record at offset " + std::to_string(in.offset()));
    }
    return records;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw DataError("error reading " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("error writing " + path.string());
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
    write_file_bytes(path, encode_tensor_file(records));
}

std::vector<TensorRecord> read_tensor_file(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    try {
        return decode_tensor_file(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

const TensorRecord& find_record(const std::vector<TensorRecord>& records, const std::string& name) {
    for (const TensorRecord& r : records) {
        if (r.name == name) return r;
    }
    throw DataError("no record named '" + name + "'");
}

}  // namespace ulre
