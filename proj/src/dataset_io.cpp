// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/dataset_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace penabc::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  if (res.ec != std::errc()) throw std::runtime_error("cannot format double");
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error("cannot parse number '" + std::string(text) + "'");
  }
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_series_csv(const std::filesystem::path& path, const RowMatrix& rows) {
  std::string out;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(rows(r, c));
    }
    out += '\n';
  }
  write_file(path, out);
}

RowMatrix read_series_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::vector<double>> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string_view::npos) comma = line.size();
      row.push_back(parse_double(line.substr(pos, comma - pos)));
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error(path.string() + ": ragged CSV rows");
    }
    rows.push_back(std::move(row));
  }
  RowMatrix m(static_cast<Eigen::Index>(rows.size()),
              rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
}

std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw std::runtime_error("truncated binary file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += 4;
  return v;
}

double get_f64(std::string_view in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw std::runtime_error("truncated binary file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += 8;
  return std::bit_cast<double>(bits);
}

void write_series_binary(const std::filesystem::path& path, const RowMatrix& rows) {
  std::string out;
  out.reserve(16 + static_cast<std::size_t>(rows.size()) * 8);
  out.append(kSeriesMagic);
  put_u32(out, static_cast<std::uint32_t>(rows.cols()));
  put_u32(out, static_cast<std::uint32_t>(rows.rows()));
  const double* data = rows.data();
  for (Eigen::Index i = 0; i < rows.size(); ++i) put_f64(out, data[i]);
  write_file(path, out);
}

RowMatrix read_series_binary(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::string_view(bytes).substr(0, 8) != kSeriesMagic) {
    throw std::runtime_error(path.string() + ": not a PENABC01 series file");
  }
  std::size_t pos = 8;
  const std::uint32_t m = get_u32(bytes, pos);
  const std::uint32_t count = get_u32(bytes, pos);
  const std::size_t expected = 16 + static_cast<std::size_t>(m) * count * 8;
  if (bytes.size() != expected) {
    throw std::runtime_error(path.string() + ": size does not match header");
  }
  RowMatrix rows(count, m);
  double* data = rows.data();
  for (Eigen::Index i = 0; i < rows.size(); ++i) data[i] = get_f64(bytes, pos);
  return rows;
}

}  // namespace penabc::io
