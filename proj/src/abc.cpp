// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/abc.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "penabc/dataset_io.hpp"

namespace penabc::abc {

using models::ModelId;

ReferenceTable build_reference_table(ModelId model, std::size_t series_len, std::size_t n,
                                     std::uint64_t seed, std::uint64_t stream, std::size_t threads) {
  if (n == 0) throw std::invalid_argument("reference table needs at least one entry");
  if (series_len == 0) throw std::invalid_argument("series length must be positive");
  const auto p = static_cast<Eigen::Index>(models::param_dim(model));
  ReferenceTable table;
  table.model = model;
  table.series_len = series_len;
  table.thetas.resize(static_cast<Eigen::Index>(n), p);
  table.series.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(series_len));
  const models::PriorSpec prior = models::PriorSpec::for_model(model);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        Rng rng = make_rng(seed, stream, i);
        const models::ParamVector theta = models::sample_prior(prior, rng);
        const models::Series y = models::simulate_observation(theta, series_len, rng);
        const auto r = static_cast<Eigen::Index>(i);
        std::copy(theta.values.begin(), theta.values.end(), table.thetas.row(r).data());
        std::copy(y.begin(), y.end(), table.series.row(r).data());
      } catch (const std::exception& e) {
        throw std::runtime_error("reference table entry " + std::to_string(i) + ": " + e.what());
      }
    }
  });
  return table;
}

RowMatrix summarize_table(const ReferenceTable& table, const summary::SummaryFunction& fn,
                          std::size_t threads) {
  constexpr std::size_t kChunk = 1024;
  const std::size_t n = table.size();
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(fn.dim()));
  // Chunk boundaries are fixed so results do not depend on the worker count.
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t c = cb; c < ce; ++c) {
      const auto start = static_cast<Eigen::Index>(c * kChunk);
      const auto len = static_cast<Eigen::Index>(std::min(kChunk, n - c * kChunk));
      const RowMatrix block = table.series.middleRows(start, len);
      out.middleRows(start, len) = fn.apply(block);
    }
  });
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!out.row(i).allFinite()) {
      throw std::runtime_error("non-finite summary for reference table entry " + std::to_string(i));
    }
  }
  return out;
}

double mahalanobis(std::span<const double> s_star, std::span<const double> s_obs,
                   std::span<const double> diag_weights) {
  if (s_star.size() != s_obs.size() || s_star.size() != diag_weights.size()) {
    throw std::invalid_argument("summary length mismatch");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < s_star.size(); ++j) {
    const double diff = s_star[j] - s_obs[j];
    acc += diag_weights[j] * diff * diff;
  }
  return std::sqrt(acc);
}

std::size_t retention_count(std::size_t n_tilde, double percentile_x) {
  if (!(percentile_x > 0.0 && percentile_x < 100.0)) {
    throw std::invalid_argument("percentile must lie in (0, 100)");
  }
  return static_cast<std::size_t>(std::floor(static_cast<double>(n_tilde) * percentile_x / 100.0 + 1e-9));
}

PosteriorSample rejection_sample(const RowMatrix& summaries, const RowMatrix& thetas,
                                 std::span<const double> s_obs, std::span<const double> diag_weights,
                                 double percentile_x) {
  if (summaries.rows() != thetas.rows()) throw std::invalid_argument("summaries and thetas differ in length");
  if (static_cast<std::size_t>(summaries.cols()) != s_obs.size()) {
    throw std::invalid_argument("observed summary length mismatch");
  }
  for (double w : diag_weights) {
    if (!(w > 0.0)) throw std::invalid_argument("distance weights must be positive");
  }
  const auto n = static_cast<std::size_t>(summaries.rows());
  const std::size_t k = retention_count(n, percentile_x);
  if (k == 0) {
    throw std::runtime_error("percentile retains no proposals; increase x or the table size");
  }
  using Item = std::pair<double, std::size_t>;
  // Max-heap on (distance, index): the top is the worst retained candidate.
  std::priority_queue<Item> heap;
  const auto q = static_cast<std::size_t>(summaries.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const double dist = mahalanobis(std::span<const double>(summaries.row(static_cast<Eigen::Index>(i)).data(), q),
                                    s_obs, diag_weights);
    if (std::isnan(dist)) throw std::runtime_error("NaN distance at table entry " + std::to_string(i));
    const Item item{dist, i};
    if (heap.size() < k) {
      heap.push(item);
    } else if (item < heap.top()) {
      heap.pop();
      heap.push(item);
    }
  }
  std::vector<Item> kept;
  kept.reserve(k);
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::reverse(kept.begin(), kept.end());
  PosteriorSample out;
  out.draws.resize(static_cast<Eigen::Index>(kept.size()), thetas.cols());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    out.draws.row(static_cast<Eigen::Index>(r)) = thetas.row(static_cast<Eigen::Index>(kept[r].second));
    out.distances.push_back(kept[r].first);
    out.indices.push_back(kept[r].second);
  }
  return out;
}

PosteriorSample rejection_sample(const ReferenceTable& table, std::span<const double> s_obs,
                                 std::span<const double> diag_weights, double percentile_x) {
  if (!table.has_summaries()) throw std::invalid_argument("reference table has no summaries");
  return rejection_sample(table.summaries, table.thetas, s_obs, diag_weights, percentile_x);
}

// ------------------------------------------------------------------ files

namespace {

std::string theta_header(Eigen::Index p) {
  std::string h;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (j > 0) h += ',';
    h += "theta_" + std::to_string(j + 1);
  }
  return h;
}

std::vector<std::vector<double>> parse_csv_rows(const std::filesystem::path& path, std::string& header) {
  std::istringstream in(io::read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  if (!std::getline(in, header)) throw std::runtime_error(path.string() + ": empty CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      row.push_back(io::parse_double(std::string_view(line).substr(pos, comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error(path.string() + ": ragged CSV");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_posterior_csv(const std::filesystem::path& path, const PosteriorSample& sample) {
  std::string out = theta_header(sample.draws.cols()) + ",distance\n";
  for (Eigen::Index r = 0; r < sample.draws.rows(); ++r) {
    for (Eigen::Index j = 0; j < sample.draws.cols(); ++j) {
      out += io::format_double(sample.draws(r, j));
      out += ',';
    }
    out += io::format_double(sample.distances.at(static_cast<std::size_t>(r)));
    out += '\n';
  }
  io::write_file(path, out);
}

PosteriorSample read_posterior_csv(const std::filesystem::path& path) {
  std::string header;
  const auto rows = parse_csv_rows(path, header);
  const bool has_distance = header.ends_with(",distance");
  PosteriorSample out;
  if (rows.empty()) return out;
  const auto p = static_cast<Eigen::Index>(rows.front().size() - (has_distance ? 1 : 0));
  out.draws.resize(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index j = 0; j < p; ++j) out.draws(static_cast<Eigen::Index>(r), j) = rows[r][j];
    if (has_distance) out.distances.push_back(rows[r].back());
    out.indices.push_back(r);
  }
  return out;
}

void write_draws_csv(const std::filesystem::path& path, const RowMatrix& draws) {
  std::string out = theta_header(draws.cols()) + "\n";
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
      if (j > 0) out += ',';
      out += io::format_double(draws(r, j));
    }
    out += '\n';
  }
  io::write_file(path, out);
}

RowMatrix read_draws_csv(const std::filesystem::path& path) {
  return read_posterior_csv(path).draws;
}

void save_table(const std::filesystem::path& stem, const ReferenceTable& table) {
  io::write_series_binary(stem.string() + ".thetas.bin", table.thetas);
  io::write_series_binary(stem.string() + ".series.bin", table.series);
}

ReferenceTable load_table(const std::filesystem::path& stem, ModelId model) {
  ReferenceTable table;
  table.model = model;
  table.thetas = io::read_series_binary(stem.string() + ".thetas.bin");
  table.series = io::read_series_binary(stem.string() + ".series.bin");
  if (table.thetas.rows() != table.series.rows()) throw std::runtime_error("table files disagree in length");
  if (static_cast<std::size_t>(table.thetas.cols()) != models::param_dim(model)) {
    throw std::runtime_error("table parameter dimension does not match the model");
  }
  table.series_len = static_cast<std::size_t>(table.series.cols());
  return table;
}

}  // namespace penabc::abc
