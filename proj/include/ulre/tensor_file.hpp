#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "ulre/tensor.hpp"

namespace ulre {

// Binary tensor container. Layout, all integers little-endian:
//
//   "ULRE"                      4-byte magic
//   u16 version                 currently 1
//   u16 record count
//   per record:
//     u16 name length, name bytes (UTF-8)
//     u8  dtype                 0 = f64 little-endian, 1 = u8
//     u8  rank
//     u64 dims[rank]
//     payload                   element size * product(dims) bytes, row-major
inline constexpr std::uint16_t kTensorFileVersion = 1;

enum class DType : std::uint8_t { f64 = 0, u8 = 1 };

struct TensorRecord {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::variant<std::vector<double>, std::vector<std::uint8_t>> payload;

    DType dtype() const noexcept { return payload.index() == 0 ? DType::f64 : DType::u8; }
    std::size_t element_count() const noexcept;

    static TensorRecord from_tensor(std::string name, const Tensor& t);
    static TensorRecord from_bytes(std::string name, std::vector<std::uint64_t> dims,
                                   std::vector<std::uint8_t> bytes);

    // Throw DataError if the dtype does not match.
    Tensor to_tensor() const;
    const std::vector<std::uint8_t>& bytes() const;

    friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

std::vector<std::uint8_t> encode_tensor_file(const std::vector<TensorRecord>& records);
// Throws DataError naming the record and byte offset of any inconsistency.
std::vector<TensorRecord> decode_tensor_file(const std::vector<std::uint8_t>& bytes);

void write_tensor_file(const std::filesystem::path& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_tensor_file(const std::filesystem::path& path);

// Throws DataError if no record carries `name`.
const TensorRecord& find_record(const std::vector<TensorRecord>& records, const std::string& name);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace ulre
