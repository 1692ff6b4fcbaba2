#include "udtsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace udtsep {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double energy(std::span<const double> a) { return dot(a, a); }

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch " + std::to_string(a) +
                                " vs " + std::to_string(b));
  }
}

double ratio_db(double num, double den) {
  if (den == 0.0) return num == 0.0 ? 0.0 : kInf;
  if (num == 0.0) return -kInf;
  return 10.0 * std::log10(num / den);
}

std::string fmt_db(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

double si_sdr(std::span<const double> reference, std::span<const double> estimate) {
  check_lengths(reference.size(), estimate.size(), "si_sdr");
  const double ref_energy = energy(reference);
  if (ref_energy == 0.0) throw std::invalid_argument("si_sdr: reference has zero energy");

  const double alpha = dot(estimate, reference) / ref_energy;
  if (alpha == 0.0) return -kInf;
  double target = 0, err = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    const double e = t - estimate[i];
    target += t * t;
    err += e * e;
  }
  return ratio_db(target, err);
}

BssParts bss_decompose(std::span<const double> estimate, std::span<const double> target_ref,
                       std::span<const double> interferer_ref) {
  check_lengths(estimate.size(), target_ref.size(), "bss_decompose");
  check_lengths(estimate.size(), interferer_ref.size(), "bss_decompose");
  const std::size_t n = estimate.size();

  const double g11 = energy(target_ref);
  const double g22 = energy(interferer_ref);
  const double g12 = dot(target_ref, interferer_ref);
  if (g11 == 0.0 || g22 == 0.0) {
    throw std::invalid_argument("bss_decompose: a reference has zero energy");
  }
  const double det = g11 * g22 - g12 * g12;
  if (det <= 1e-12 * g11 * g22) {
    throw std::invalid_argument("bss_decompose: references are collinear");
  }

  const double p1 = dot(estimate, target_ref);
  const double p2 = dot(estimate, interferer_ref);

  // s_target spans only the target reference
  const double a = p1 / g11;
  // joint projection coefficients from the 2x2 Gram system
  const double c1 = (g22 * p1 - g12 * p2) / det;
  const double c2 = (g11 * p2 - g12 * p1) / det;

  BssParts parts;
  parts.s_target.resize(n);
  parts.e_interf.resize(n);
  parts.e_artif.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double st = a * target_ref[i];
    const double span2 = c1 * target_ref[i] + c2 * interferer_ref[i];
    parts.s_target[i] = st;
    parts.e_interf[i] = span2 - st;
    parts.e_artif[i] = estimate[i] - span2;
  }
  return parts;
}

SirSar sir_sar(const BssParts& parts) {
  const double et = energy(parts.s_target);
  const double ei = energy(parts.e_interf);
  const double ea = energy(parts.e_artif);
  if (et == 0.0) throw std::invalid_argument("sir_sar: zero target part, SIR undefined");
  double sig = 0;
  for (std::size_t i = 0; i < parts.s_target.size(); ++i) {
    const double v = parts.s_target[i] + parts.e_interf[i];
    sig += v * v;
  }
  return {ratio_db(et, ei), ratio_db(sig, ea)};
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("summarize: empty list");
  Summary s;
  s.count = values.size();
  std::vector<double> v = values;
  for (double& x : v) {
    if (x == kInf) {
      x = kClampDb;
      ++s.clamped;
    } else if (x == -kInf) {
      x = -kClampDb;
      ++s.clamped;
    }
  }
  std::sort(v.begin(), v.end());
  auto pct = [&](double p) {
    const double rank = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
  };
  s.q25 = pct(0.25);
  s.median = pct(0.5);
  s.q75 = pct(0.75);
  return s;
}

EvalReport summarize_items(std::vector<EvalItem> items, std::size_t skipped) {
  EvalReport report;
  report.items = std::move(items);
  report.skipped = skipped;
  if (!report.items.empty()) {
    std::vector<double> a, b, c;
    for (const auto& it : report.items) {
      a.push_back(it.si_sdr);
      b.push_back(it.sir);
      c.push_back(it.sar);
    }
    report.si_sdr_summary = summarize(a);
    report.sir_summary = summarize(b);
    report.sar_summary = summarize(c);
  }
  return report;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << "id,si_sdr,sir,sar\n";
    for (const auto& it : report.items) {
      out << it.id << "," << fmt_db(it.si_sdr) << "," << fmt_db(it.sir) << "," << fmt_db(it.sar)
          << "\n";
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  auto summary_json = [](const Summary& s) {
    return nlohmann::json{{"median", s.median},
                          {"q25", s.q25},
                          {"q75", s.q75},
                          {"count", s.count},
                          {"clamped", s.clamped}};
  };
  nlohmann::json j{{"si_sdr", summary_json(report.si_sdr_summary)},
                   {"sir", summary_json(report.sir_summary)},
                   {"sar", summary_json(report.sar_summary)},
                   {"items", report.items.size()},
                   {"skipped", report.skipped}};
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace udtsep
