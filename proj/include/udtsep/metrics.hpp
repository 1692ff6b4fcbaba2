#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace udtsep {

// dB value used in place of +-infinity when ranking summary statistics
inline constexpr double kClampDb = 200.0;

// Scale-invariant SDR. alpha = <est, ref> / ||ref||^2; returns
// 10*log10(||alpha ref||^2 / ||alpha ref - est||^2). +inf for a zero error,
// -inf for an orthogonal estimate.
double si_sdr(std::span<const double> reference, std::span<const double> estimate);

struct BssParts {
  std::vector<double> s_target;  // projection of the estimate onto the target
  std::vector<double> e_interf;  // what the interferer reference explains
  std::vector<double> e_artif;   // the rest; the three sum to the estimate
};

// Instantaneous (filter-free) projection decomposition against the two
// references. Throws on collinear references.
BssParts bss_decompose(std::span<const double> estimate, std::span<const double> target_ref,
                       std::span<const double> interferer_ref);

struct SirSar {
  double sir;
  double sar;
};

SirSar sir_sar(const BssParts& parts);

struct Summary {
  double median = 0, q25 = 0, q75 = 0;
  std::size_t count = 0;
  std::size_t clamped = 0;  // +-inf entries clamped to +-kClampDb before ranking
};

// Linear-interpolation percentiles.
Summary summarize(const std::vector<double>& values);

struct EvalItem {
  std::string id;
  double si_sdr;
  double sir;
  double sar;
};

struct EvalReport {
  std::vector<EvalItem> items;
  Summary si_sdr_summary, sir_summary, sar_summary;
  std::size_t skipped = 0;  // items dropped for length mismatch
};

EvalReport summarize_items(std::vector<EvalItem> items, std::size_t skipped);

// one row per item: id, si_sdr, sir, sar
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
// medians, quartiles, count, clamp counts
void write_report_json(const std::filesystem::path& path, const EvalReport& report);

}  // namespace udtsep
