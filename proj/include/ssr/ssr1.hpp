// SSR1 binary matrix file format.
//
//   bytes 0..3   ASCII magic "SSR1"
//   bytes 4..11  rows, 64-bit little-endian unsigned
//   bytes 12..19 cols, 64-bit little-endian unsigned
//   then rows*cols IEEE-754 doubles, 64-bit little-endian, row-major
//
// Vectors are stored as len x 1 matrices. Writes go through a temp file and
// rename so readers never observe a half-written file.
#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ssr/linalg.hpp"

namespace ssr {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline std::string encode_ssr1(const DenseMatrix& m) {
    std::string out;
    out.reserve(20 + 8 * m.data.size());
    out += "SSR1";
    detail::put_u64le(out, m.rows);
    detail::put_u64le(out, m.cols);
    for (double x : m.data) detail::put_u64le(out, std::bit_cast<std::uint64_t>(x));
    return out;
}

// Parses one SSR1 record starting at `offset`; advances `offset` past it.
inline DenseMatrix decode_ssr1(const std::string& buf, std::size_t& offset,
                               const std::string& where) {
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (offset + 20 > buf.size() || buf.compare(offset, 4, "SSR1") != 0)
        throw IoError(where + ": not an SSR1 record at offset " + std::to_string(offset));
    const std::uint64_t rows = detail::get_u64le(p + offset + 4);
    const std::uint64_t cols = detail::get_u64le(p + offset + 12);
    if (rows > (1ull << 32) || cols > (1ull << 32) || rows * cols > (1ull << 32))
        throw IoError(where + ": implausible dimensions");
    const std::size_t need = 20 + 8 * static_cast<std::size_t>(rows * cols);
    if (offset + need > buf.size()) throw IoError(where + ": truncated SSR1 record");
    DenseMatrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    for (std::size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = std::bit_cast<double>(detail::get_u64le(p + offset + 20 + 8 * i));
    if (!all_finite(m)) throw IoError(where + ": non-finite values");
    offset += need;
    return m;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + tmp.string());
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_ssr1(const std::filesystem::path& path, const DenseMatrix& m) {
    write_file_atomic(path, encode_ssr1(m));
}

inline DenseMatrix read_ssr1(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::size_t offset = 0;
    DenseMatrix m = decode_ssr1(bytes, offset, path.string());
    if (offset != bytes.size()) throw IoError(path.string() + ": trailing bytes");
    return m;
}

inline DenseMatrix matrix_from_columns(const std::vector<DenseVector>& cols) {
    if (cols.empty()) return DenseMatrix(0, 0);
    DenseMatrix m(cols[0].size(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        require(cols[j].size() == m.rows, "matrix_from_columns: ragged columns");
        for (std::size_t i = 0; i < m.rows; ++i) m(i, j) = cols[j][i];
    }
    return m;
}

inline std::vector<DenseVector> columns_of(const DenseMatrix& m) {
    std::vector<DenseVector> cols(m.cols, DenseVector(m.rows));
    for (std::size_t j = 0; j < m.cols; ++j)
        for (std::size_t i = 0; i < m.rows; ++i) cols[j][i] = m(i, j);
    return cols;
}

}  // namespace ssr
