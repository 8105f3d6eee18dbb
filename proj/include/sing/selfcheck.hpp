#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sing::check {

// ---------------------------------------------------------------------------
// finite-difference gradient suite
// ---------------------------------------------------------------------------

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  int coords_checked = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double seconds = 0;

  bool pass() const {
    for (const auto& r : rows)
      if (!r.pass) return false;
    return true;
  }
};

// Central differences (eps 1e-5, doubles) against the tape adjoints for
// conv1d, conv1d_transpose, the ConvLSTM cell, a two-layer generator with
// block recurrence (sampled coordinates), and the critic.
GradCheckReport gradient_suite(std::uint64_t seed = 1234);

std::string format_gradcheck(const GradCheckReport& report);

// ---------------------------------------------------------------------------
// critic-vs-oracle Wasserstein probe sweep
// ---------------------------------------------------------------------------

struct W1ProbeReport {
  std::vector<double> shifts;
  std::vector<double> gaps;
  std::vector<double> oracles;
  double identical_gap = 0;
  double spearman_corr = 0;
  double seconds = 0;

  bool pass() const;
};

W1ProbeReport w1_probe_suite(std::uint64_t seed = 99);

std::string format_w1probe(const W1ProbeReport& report);

}  // namespace sing::check
