// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_DATASET_IO_HPP
#define PENABC_DATASET_IO_HPP

#include <filesystem>
#include <string>
#include <string_view>

#include "penabc/common.hpp"

namespace penabc::io {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

/// One series per line, comma separated, no header.
void write_series_csv(const std::filesystem::path& path, const RowMatrix& rows);
RowMatrix read_series_csv(const std::filesystem::path& path);

/// Binary column file:
///   bytes 0..7   "PENABC01"
///   bytes 8..11  u32 little-endian M (values per series)
///   bytes 12..15 u32 little-endian count (number of series)
///   then count * M little-endian IEEE-754 doubles, series after series.
inline constexpr std::string_view kSeriesMagic = "PENABC01";

void write_series_binary(const std::filesystem::path& path, const RowMatrix& rows);
RowMatrix read_series_binary(const std::filesystem::path& path);

/// Little-endian primitives shared by the binary formats.
void put_u32(std::string& out, std::uint32_t v);
void put_f64(std::string& out, double v);
std::uint32_t get_u32(std::string_view in, std::size_t& pos);
double get_f64(std::string_view in, std::size_t& pos);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace penabc::io

#endif  // PENABC_DATASET_IO_HPP
