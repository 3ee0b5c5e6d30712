// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "xtime/config.hpp"
#include "xtime/eval.hpp"
#include "xtime/ewt.hpp"
#include "xtime/expert.hpp"
#include "xtime/losses.hpp"
#include "xtime/pipeline.hpp"
#include "xtime/rng.hpp"
#include "xtime/router.hpp"

#ifndef XTIME_PRESET_PATH
#error "XTIME_PRESET_PATH must point at the synthetic preset config"
#endif

namespace {

using namespace xtime;
using Clock = std::chrono::steady_clock;
constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::vector<double> normal_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// ---------------------------------------------------------------- 1

Outcome ewt_reconstruction() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::size_t bands : {1u, 2u, 4u, 8u}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(1000 + seed);
      const auto x = normal_vec(rng, 512);
      const auto bank = ewt::build_filter_bank_relative(ewt::detect_boundaries(x, bands), x.size(), 0.5);
      const auto back = ewt::reconstruct(ewt::decompose(x, bank));
      double err = 0.0, norm = 0.0;
      for (std::size_t t = 0; t < x.size(); ++t) {
        err = std::max(err, std::abs(back[t] - x[t]));
        norm = std::max(norm, std::abs(x[t]));
      }
      worst = std::max(worst, err / norm);
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 2.0, "max rel err " + fmt(worst) + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 2

using cd = std::complex<double>;

std::vector<cd> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t t = 0; t < n; ++t) out[k] += x[t] * std::polar(1.0, -2.0 * kPi * double(k * t % n) / double(n));
  }
  return out;
}

std::vector<double> naive_idft_real(const std::vector<cd>& X) {
  const std::size_t n = X.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    cd acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += X[k] * std::polar(1.0, 2.0 * kPi * double(k * t % n) / double(n));
    out[t] = acc.real() / double(n);
  }
  return out;
}

Outcome two_tone_isolation() {
  const std::size_t n = 500;
  std::vector<double> x(n), low(n), high(n);
  for (std::size_t t = 0; t < n; ++t) {
    low[t] = std::cos(0.2 * kPi * double(t));
    high[t] = std::cos(0.8 * kPi * double(t));
    x[t] = low[t] + high[t];
  }
  const auto bank = ewt::build_filter_bank(ewt::detect_boundaries(x, 2), n, 0.0);
  const auto parts = ewt::decompose(x, bank);

  // Oracle: split the spectrum halfway between the two brute-force peaks.
  const auto X = naive_dft(x);
  std::size_t p1 = 1, p2 = n / 4 + 1;
  for (std::size_t k = 1; k < n / 4; ++k) if (std::abs(X[k]) > std::abs(X[p1])) p1 = k;
  for (std::size_t k = n / 4 + 1; k < n / 2; ++k) if (std::abs(X[k]) > std::abs(X[p2])) p2 = k;
  const double edge = 0.5 * double(p1 + p2) * 2.0 * kPi / double(n);
  std::vector<cd> lo_spec(X), hi_spec(X);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t m = k <= n / 2 ? k : n - k;
    const bool in_low = 2.0 * kPi * double(m) / double(n) < edge;
    (in_low ? hi_spec : lo_spec)[k] = 0.0;
  }
  const std::vector<std::vector<double>> oracle{naive_idft_real(lo_spec), naive_idft_real(hi_spec)};

  double worst = 0.0, tone_err = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    double s = 0.0, st = 0.0;
    const auto& tone = b == 0 ? low : high;
    for (std::size_t t = 0; t < n; ++t) {
      s += std::pow(parts.components[b][t] - oracle[b][t], 2);
      st += std::pow(parts.components[b][t] - tone[t], 2);
    }
    worst = std::max(worst, std::sqrt(s / double(n)));
    tone_err = std::max(tone_err, std::sqrt(st / double(n)));
  }
  return {parts.bands() == 2 && worst <= 1e-6 && tone_err <= 1e-6,
          "rms vs oracle " + fmt(worst) + ", vs pure tone " + fmt(tone_err)};
}

// ---------------------------------------------------------------- 3

double penalty(double delta, RarityLevel level, std::size_t horizon = 24) {
  return losses::rare_penalty(delta, {level, level, horizon}).value;
}

Outcome loss_closed_forms() {
  const double e1 = std::abs(penalty(0.5, RarityLevel::Normal) - 0.25);
  const double e2 = std::abs(penalty(-1.0, RarityLevel::Moderate) - (std::exp(1.0) - 1.0));
  const double e3 = std::abs(penalty(1.0, RarityLevel::VeryRare) - std::log(std::cosh(1.0)));
  const double e4 = std::abs(penalty(1.0, RarityLevel::ExtremeRare, 24) - (std::exp(1.0 / 25.0) - 1.0));
  const double worst = std::max({e1, e2, e3, e4});
  double jump = 0.0;
  for (auto level : kAllLevels) {
    for (double eps : {1e-9, 1e-12}) {
      jump = std::max({jump, std::abs(penalty(eps, level)), std::abs(penalty(-eps, level)), std::abs(penalty(0.0, level))});
    }
  }
  return {worst <= 1e-12 && jump <= 1e-8, "closed-form err " + fmt(worst) + ", jump at 0 " + fmt(jump)};
}

// ---------------------------------------------------------------- 4

double rel_err(double analytic, double fd) { return std::abs(analytic - fd) / std::max(1.0, std::abs(fd)); }

double kernel_gradients() {
  Rng rng(44);
  double worst = 0.0;
  const double h = 1e-6;
  for (auto level : kAllLevels) {
    for (int probe = 0; probe < 1000; ++probe) {
      double delta = rng.uniform(-5.0, 5.0);
      if (std::abs(delta) < 1e-4) delta = delta < 0 ? -1e-4 : 1e-4;
      const losses::PenaltyContext ctx{level, level, 1 + rng.below(48)};
      const double fd =
          (losses::rare_penalty(delta + h, ctx).value - losses::rare_penalty(delta - h, ctx).value) / (2 * h);
      worst = std::max(worst, rel_err(losses::rare_penalty(delta, ctx).d_dpred, fd));
    }
  }
  for (int probe = 0; probe < 1000; ++probe) {
    auto student = normal_vec(rng, 8);
    auto teacher = normal_vec(rng, 8);
    const std::size_t i = rng.below(8);
    if (std::abs(student[i] - teacher[i]) < 1e-4) student[i] = teacher[i] + 1e-4;
    const auto g = losses::kd_loss(student, teacher).grad[i];
    const double saved = student[i];
    student[i] = saved + h;
    const double up = losses::kd_loss(student, teacher).value;
    student[i] = saved - h;
    const double down = losses::kd_loss(student, teacher).value;
    worst = std::max(worst, rel_err(g, (up - down) / (2 * h)));
  }
  return worst;
}

// d loss / d params of a whole expert: decomposition, per-band backbones,
// band sum and the combined loss, against central differences.
double expert_gradients() {
  Rng rng(45);
  double worst = 0.0;
  const double h = 1e-6;
  const std::size_t T = 32, H = 8;
  int probes = 0;
  for (auto kind : {BackboneKind::Linear, BackboneKind::Mlp}) {
    ExpertConfig cfg;
    cfg.history = T;
    cfg.horizon = H;
    cfg.bands = 4;
    cfg.backbone = kind;
    cfg.hidden = 8;
    cfg.beta = 0.7;
    cfg.seed = 9;
    auto expert = make_expert(RarityLevel::VeryRare, cfg);
    for (int window = 0; window < 10; ++window) {
      const auto x = normal_vec(rng, T);
      const auto truth = normal_vec(rng, H);
      const auto teacher = normal_vec(rng, H);
      std::vector<RarityLevel> lv(H);
      for (auto& l : lv) l = level_from_index(rng.below(kRarityLevels));
      const auto loss = [&] {
        return losses::combined_loss(expert_predict(expert, x), truth, std::span<const double>(teacher), lv,
                                     expert.level, cfg.beta, H);
      };
      const auto bands = decompose_history(expert, x);
      const auto grad_out = loss().grad;
      std::vector<std::vector<double>> grads;
      for (std::size_t b = 0; b < expert.bands(); ++b) {
        grads.push_back(expert.backbones[b].backward(bands.components[b], grad_out));
      }
      for (int p = 0; p < 50; ++p, ++probes) {
        const std::size_t b = rng.below(expert.bands());
        auto params = expert.backbones[b].parameters();
        const std::size_t i = rng.below(params.size());
        const double saved = params[i];
        params[i] = saved + h;
        const double up = loss().value;
        params[i] = saved - h;
        const double down = loss().value;
        params[i] = saved;
        worst = std::max(worst, rel_err(grads[b][i], (up - down) / (2 * h)));
      }
    }
  }
  return probes == 1000 ? worst : INFINITY;
}

Outcome gradient_suite() {
  const double kernels = kernel_gradients();
  const double pipeline = expert_gradients();
  return {kernels <= 1e-5 && pipeline <= 1e-4, "kernels " + fmt(kernels) + ", expert " + fmt(pipeline)};
}

// ---------------------------------------------------------------- 5

Outcome asymmetry() {
  Rng rng(55);
  int violations = 0;
  for (auto level : {RarityLevel::Moderate, RarityLevel::VeryRare, RarityLevel::ExtremeRare}) {
    for (std::size_t horizon : {1u, 16u, 24u}) {
      for (int i = 0; i < 1000; ++i) {
        const double d = 1e-3 + (10.0 - 1e-3) * (1.0 - rng.uniform());
        if (!(penalty(d, level, horizon) < penalty(-d, level, horizon))) ++violations;
        if (!(penalty(-d, level, horizon) > penalty(-d, RarityLevel::Normal, horizon))) ++violations;
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " violations"};
}

// ---------------------------------------------------------------- 6

Outcome router_algebra() {
  Rng rng(66);
  const std::size_t E = 4, H = 16;
  double sum_err = 0.0;
  int topk_mismatch = 0, argmax_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> logits = normal_vec(rng, E);
    for (double& l : logits) l *= 5.0;
    const auto alpha = softmax(logits);
    double s = 0.0;
    for (double a : alpha) s += a;
    sum_err = std::max(sum_err, std::abs(s - 1.0));
    if (select_topk(alpha, E) != alpha) ++topk_mismatch;

    ExpertOutputs outs(H, E);
    for (double& v : outs.values) v = rng.normal();
    const auto best = std::size_t(std::max_element(alpha.begin(), alpha.end()) - alpha.begin());
    if (fuse(outs, select_topk(alpha, 1)) != outs.column(best)) ++argmax_mismatch;
  }
  const double ce = std::abs(cross_entropy(std::vector<double>(E, 0.0), 2).value - std::log(4.0));
  return {sum_err <= 1e-12 && topk_mismatch == 0 && argmax_mismatch == 0 && ce <= 1e-12,
          "sum err " + fmt(sum_err) + ", top-k mismatches " + std::to_string(topk_mismatch) + ", argmax mismatches " +
              std::to_string(argmax_mismatch) + ", CE err " + fmt(ce)};
}

// ---------------------------------------------------------------- 7, 8

PipelineConfig preset_for_seed(const PipelineConfig& preset, std::uint64_t seed) {
  auto c = preset;
  c.seed = seed;
  c.synth.seed = seed;
  return c;
}

double extreme_mse(const MetricsReport& r) {
  const auto& l = r.level(RarityLevel::ExtremeRare);
  return l ? l->mse : NAN;
}

Outcome end_to_end(const PipelineConfig& preset) {
  const auto t0 = Clock::now();
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cfg = preset_for_seed(preset, seed);
    const auto data = prepare_data(load_source(cfg), cfg);
    const auto system = train_system(data, cfg);
    const auto full = evaluate_predictions(predict_windows(system, data.test_windows), data, cfg);
    const auto base = evaluate_predictions(predict_windows(train_baseline(data, cfg), data.test_windows), data, cfg);
    const double a = extreme_mse(full), b = extreme_mse(base);
    wins += a <= b;
    detail += " s" + std::to_string(seed) + "=" + fmt(a) + "/" + fmt(b);
  }
  const double secs = seconds_since(t0);
  return {wins >= 4 && secs < 600.0,
          std::to_string(wins) + "/5 seeds at or below baseline (xTime/baseline extreme MSE:" + detail + "), " +
              fmt(secs) + " s"};
}

Outcome ablation(const PipelineConfig& preset) {
  const auto toggles = table_x_preset();
  std::vector<double> none, full;
  bool completed = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cfg = preset_for_seed(preset, seed);
    const auto data = prepare_data(load_source(cfg), cfg);
    const auto rows = ablate(data, toggles, cfg);
    for (const auto& r : rows) completed = completed && r.status == "ok" && r.report.has_value();
    if (!completed) break;
    none.push_back(rows.front().report->overall.mse);
    full.push_back(rows.back().report->overall.mse);
  }
  if (!completed) return {false, "an ablation configuration failed"};
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double mn = median(none), mf = median(full);
  std::string per_seed;
  for (std::size_t i = 0; i < none.size(); ++i) per_seed += " s" + std::to_string(i + 1) + "=" + fmt(full[i]) + "/" + fmt(none[i]);
  return {mf <= mn, "median overall MSE full " + fmt(mf) + " vs none " + fmt(mn) + " (full/none:" + per_seed + ")"};
}

// ---------------------------------------------------------------- 9

Outcome beta_sweep(const PipelineConfig& preset) {
  // The sweep harness is exercised on a reduced budget; the criterion is
  // about completeness and determinism, not accuracy.
  auto cfg = preset;
  cfg.synth.n = 6000;
  cfg.epochs = 10;
  cfg.router_epochs = 5;
  const auto data = prepare_data(load_source(cfg), cfg);
  const auto run = [&] {
    std::ostringstream os;
    const auto rows = sweep_beta(data, kBetaSweep, cfg);
    write_sweep_csv(os, rows);
    return std::make_pair(rows, os.str());
  };
  const auto [rows, first] = run();
  const auto second = run().second;
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.status == "ok" && r.metrics.has_value();
  const std::size_t lines = std::size_t(std::count(first.begin(), first.end(), '\n'));
  const bool complete = rows.size() == 28 && ok == 28 && lines == 29;
  return {complete && first == second,
          std::to_string(rows.size()) + " rows (" + std::to_string(ok) + " ok), rerun " +
              (first == second ? "byte-identical" : "differs")};
}

// ---------------------------------------------------------------- 10

Outcome uniform_labeling() {
  Rng rng(10);
  const std::size_t n = 10000;
  std::vector<double> xs(n);
  for (double& v : xs) v = rng.uniform();
  const auto th = compute_thresholds(xs);
  std::array<std::size_t, kRarityLevels> counts{};
  for (double v : xs) ++counts[index_of(label_point(v, th))];
  const std::array<double, kRarityLevels> expected{0.90, 0.05, 0.04, 0.01};
  bool pass = true;
  std::string detail;
  for (std::size_t l = 0; l < kRarityLevels; ++l) {
    const double frac = double(counts[l]) / double(n);
    const double sigma = std::sqrt(expected[l] * (1.0 - expected[l]) / double(n));
    pass = pass && std::abs(frac - expected[l]) <= 3.0 * sigma;
    detail += (l ? ", " : "") + fmt(frac);
  }
  return {pass, "fractions " + detail};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  PipelineConfig preset;
  try {
    preset = load_config(XTIME_PRESET_PATH);
  } catch (const std::exception& e) {
    std::cerr << "cannot load preset: " << e.what() << "\n";
    return 2;
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"EWT reconstruction", ewt_reconstruction},
      {"EWT two-tone band isolation", two_tone_isolation},
      {"loss kernel closed forms", loss_closed_forms},
      {"gradient suite", gradient_suite},
      {"penalty asymmetry", asymmetry},
      {"router algebra", router_algebra},
      {"end-to-end extreme MSE vs baseline", [&] { return end_to_end(preset); }},
      {"ablation median overall MSE", [&] { return ablation(preset); }},
      {"beta sweep harness", [&] { return beta_sweep(preset); }},
      {"uniform rarity labeling", uniform_labeling},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
