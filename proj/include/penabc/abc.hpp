// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_ABC_HPP
#define PENABC_ABC_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "penabc/common.hpp"
#include "penabc/models.hpp"
#include "penabc/summary.hpp"

/// Reference-table rejection ABC.
namespace penabc::abc {

struct ReferenceTable {
  models::ModelId model = models::ModelId::GAndK;
  std::size_t series_len = 0;
  RowMatrix thetas;     // n x p
  RowMatrix series;     // n x M, cleaned as by simulate_observation
  RowMatrix summaries;  // n x q, or empty when not yet summarized

  std::size_t size() const noexcept { return static_cast<std::size_t>(thetas.rows()); }
  bool has_summaries() const noexcept { return summaries.rows() > 0; }
};

/// Entry i uses the stream derive_seed(seed, stream, i), so the table does not
/// depend on `threads`. Simulator failures are rethrown naming the index.
ReferenceTable build_reference_table(models::ModelId model, std::size_t series_len, std::size_t n,
                                     std::uint64_t seed, std::uint64_t stream = 0,
                                     std::size_t threads = 1);

/// Summaries of every table entry. Throws std::runtime_error naming the first
/// entry whose summary is not finite.
RowMatrix summarize_table(const ReferenceTable& table, const summary::SummaryFunction& fn,
                          std::size_t threads = 1);

/// sqrt(sum_j diag_j (a_j - b_j)^2).
double mahalanobis(std::span<const double> s_star, std::span<const double> s_obs,
                   std::span<const double> diag_weights);

/// floor(n * x / 100); the small slack absorbs representation error in x
/// (0.1 and 0.02 are not exact binary fractions).
std::size_t retention_count(std::size_t n_tilde, double percentile_x);

struct PosteriorSample {
  RowMatrix draws;                   // k x p
  std::vector<double> distances;     // ascending
  std::vector<std::size_t> indices;  // table rows of the draws
};

/// Keeps the retention_count() entries with the smallest distance to s_obs
/// (ties go to the lower index), ordered by (distance, index). Uses a bounded
/// heap so only k candidates are held at any time.
PosteriorSample rejection_sample(const RowMatrix& summaries, const RowMatrix& thetas,
                                 std::span<const double> s_obs, std::span<const double> diag_weights,
                                 double percentile_x);
PosteriorSample rejection_sample(const ReferenceTable& table, std::span<const double> s_obs,
                                 std::span<const double> diag_weights, double percentile_x);

/// CSV with header theta_1..theta_p,distance.
void write_posterior_csv(const std::filesystem::path& path, const PosteriorSample& sample);
/// Reads draws (and distances if present) back.
PosteriorSample read_posterior_csv(const std::filesystem::path& path);
/// Plain draws CSV with header theta_1..theta_p.
void write_draws_csv(const std::filesystem::path& path, const RowMatrix& draws);
RowMatrix read_draws_csv(const std::filesystem::path& path);

/// Stores <stem>.thetas.bin and <stem>.series.bin in the series binary format.
void save_table(const std::filesystem::path& stem, const ReferenceTable& table);
ReferenceTable load_table(const std::filesystem::path& stem, models::ModelId model);

}  // namespace penabc::abc

#endif  // PENABC_ABC_HPP
