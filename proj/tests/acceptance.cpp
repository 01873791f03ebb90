// Acceptance criteria A1-A10. Prints one PASS/FAIL line per criterion. Exits nonzero when a
// criterion fails that is not named with --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "poseforge/adam.hpp"
#include "poseforge/checkpoint.hpp"
#include "poseforge/curriculum.hpp"
#include "poseforge/flow.hpp"
#include "poseforge/io.hpp"
#include "poseforge/pipeline.hpp"
#include "poseforge/repminer.hpp"
#include "poseforge/sampling.hpp"
#include "poseforge/synthgen.hpp"
#include "poseforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace poseforge;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double normal(Rng& rng) { return std::normal_distribution<double>()(rng); }

// Average ranks, ties sharing the mean rank.
std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (i + j) / 2.0 + 1;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const Eigen::Map<const Eigen::VectorXd> x(ra.data(), static_cast<Eigen::Index>(ra.size()));
  const Eigen::Map<const Eigen::VectorXd> y(rb.data(), static_cast<Eigen::Index>(rb.size()));
  const Eigen::VectorXd xc = x.array() - x.mean(), yc = y.array() - y.mean();
  return xc.dot(yc) / (xc.norm() * yc.norm());
}

// A1 -------------------------------------------------------------------------------------------

Outcome a1_labels() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(11, "a1");
  const sampling::SamplerConfig cfg;
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const int dt = static_cast<int>(uniform_index(rng, 41)) - 20;
    if (sampling::label_temporal(dt, cfg) != oracle::temporal_label(dt)) ++mismatches;
    // Mix exact boundary values with continuous draws.
    static const double edges[] = {0.25, 0.55, 0.65, 0.95, 0.0, 1.0};
    const double v = i % 10 == 0 ? edges[uniform_index(rng, 6)] : uniform01(rng);
    if (sampling::label_spatial(v, cfg) != oracle::spatial_label(v)) ++mismatches;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 1.0, std::to_string(mismatches) + " mismatches in 10^4 cases, " + fmt(s) + " s"};
}

// A2 -------------------------------------------------------------------------------------------

Outcome a2_gradcheck() {
  const auto t0 = Clock::now();
  const auto params = nn::init_params<double>(21);
  Rng rng = make_rng(22, "a2");
  nn::JointBatch<double> batch;
  auto images = [&] {
    nn::Mat<double> m(4, nn::kInputPixels);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng);
    return m;
  };
  batch.anchors = images();
  batch.candidates = images();
  batch.spatial = images();
  batch.temporal_labels = nn::Vec<double>(4);
  batch.temporal_labels << 1, 0, 0, 1;
  batch.spatial_labels = nn::Vec<double>(4);
  batch.spatial_labels << 0, 1, 0, 1;
  const auto checks = oracle::finite_difference_check(params, batch, 0.1, nn::ArchConfig{}, 1e-3, 8, 23);
  double worst = 0;
  std::string worst_name;
  int checked = 0, reduced = 0, skipped = 0;
  for (const auto& c : checks) {
    checked += c.checked;
    reduced += c.reduced_step;
    skipped += c.skipped_kinks;
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_name = std::string(nn::param_specs()[c.tensor].name);
    }
  }
  const double s = seconds_since(t0);
  return {checks.size() == 22 && checked > 0 && worst < 1e-3 && s < 120,
          std::to_string(checks.size()) + " tensors, " + std::to_string(checked) + " entries (" +
              std::to_string(reduced) + " at a reduced step across a kink, " + std::to_string(skipped) +
              " skipped), max rel error " + fmt(worst) + " (" + worst_name + "), " + fmt(s) + " s"};
}

// A3 -------------------------------------------------------------------------------------------

Outcome a3_adam() {
  auto params = nn::ConvNetParams<double>::zeros();
  auto grads = nn::ConvNetParams<double>::zeros();
  auto state = nn::AdamState<double>::fresh();
  const std::size_t base = nn::kT1W, conv = nn::kConv1W;
  params[base](0, 0) = 0.5;
  params[conv](0, 0) = -0.25;
  grads[base](0, 0) = 1.0;
  grads[conv](0, 0) = 1.0;
  const nn::LearningRates lr{1e-4, 1e-5};
  nn::adam_step(params, grads, state, lr);
  double err = 0;
  err = std::max(err, std::abs(state.m[base](0, 0) - 0.1));
  err = std::max(err, std::abs(state.v[base](0, 0) - 0.001));
  err = std::max(err, std::abs(params[base](0, 0) - (0.5 - 1e-4 / (1 + 1e-8))));
  err = std::max(err, std::abs(params[conv](0, 0) - (-0.25 - 1e-5 / (1 + 1e-8))));
  // A few more steps with varying gradients against the scalar oracle.
  oracle::AdamScalar o{0.5 - 1e-4 / (1 + 1e-8), 0.1, 0.001};
  for (int t = 2; t <= 5; ++t) {
    const double g = 0.3 * t - 1;
    grads[base](0, 0) = g;
    nn::adam_step(params, grads, state, lr);
    o = oracle::adam_scalar(o.param, g, o.m, o.v, t, 1e-4);
    err = std::max(err, std::abs(params[base](0, 0) - o.param));
  }
  return {err < 1e-10, "max abs error " + fmt(err, 3)};
}

// A4 -------------------------------------------------------------------------------------------

Outcome a4_curriculum() {
  const std::vector<double> speeds = {0.5, 1, 2, 4};
  std::vector<double> x, ratios;
  std::vector<flow::MotionScore> all_scores;
  std::string per_clip;
  const flow::FlowConfig fcfg;
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    synth::SynthParams p;
    p.video_id = "amp" + std::to_string(i);
    p.n_frames = 40;
    p.period = 20;
    p.amplitude = speeds[i] * p.period / (2 * std::numbers::pi);
    p.background_motion = 0;
    p.noise_sigma = 2;
    p.seed = 41;
    const auto clip = synth::generate_clip(p).first;
    const auto scores = flow::score_clip(clip, fcfg);
    double sum = 0;
    for (const auto& s : scores) sum += s.fg_bg_ratio;
    x.push_back(speeds[i]);
    ratios.push_back(sum / static_cast<double>(scores.size()));
    per_clip += (i ? " " : "") + fmt(ratios.back(), 3);
    all_scores.insert(all_scores.end(), scores.begin(), scores.end());
  }
  const double rho = spearman(x, ratios);

  bool monotone = true;
  const auto schedule = curriculum::build_curriculum(all_scores, curriculum::kDefaultFractions, 3);
  auto prev = curriculum::active_pool(schedule, 0);
  for (long it = 1; it <= 3 * static_cast<long>(schedule.blocks.size()) + 3; ++it) {
    const auto cur = curriculum::active_pool(schedule, it);
    monotone = monotone && std::includes(cur.begin(), cur.end(), prev.begin(), prev.end());
    prev = cur;
  }
  monotone = monotone && prev.size() == all_scores.size();
  return {rho >= 0.9 && monotone, "spearman " + fmt(rho) + " (mean ratios " + per_clip + "), active pool " +
                                      (monotone ? "monotone" : "NOT monotone")};
}

// A5 -------------------------------------------------------------------------------------------

Outcome a5_repetitions() {
  const auto t0 = Clock::now();
  synth::SynthParams p;
  p.period = 20;
  p.n_frames = 200;
  rep::EmbeddingSequence seq;
  seq.video_id = p.video_id;
  seq.vectors.resize(p.n_frames, 2 * kNumJoints);
  for (int t = 0; t < p.n_frames; ++t) {
    const Joints j = synth::pose_at(p, t);
    seq.frame_indices.push_back(t);
    for (int r = 0; r < kNumJoints; ++r) {
      seq.vectors(t, 2 * r) = static_cast<float>(j(r, 0));
      seq.vectors(t, 2 * r + 1) = static_cast<float>(j(r, 1));
    }
  }
  rep::normalize_rows(seq.vectors);
  seq.normalized = true;
  const auto groups = rep::mine_sequence(seq, rep::MinerConfig{});
  long offsets = 0, good = 0, spurious_groups = 0;
  for (const auto& g : groups) {
    bool any_good = false;
    for (int r : g.repeat_indices) {
      const int d = std::abs(r - g.anchor_index);
      const int m = d % p.period;
      const bool ok = d >= p.period - 1 && (m <= 1 || m >= p.period - 1);
      ++offsets;
      good += ok ? 1 : 0;
      any_good = any_good || ok;
    }
    spurious_groups += any_good ? 0 : 1;
  }
  const double s = seconds_since(t0);
  const double within = offsets ? static_cast<double>(good) / offsets : 0.0;
  const double spurious = groups.empty() ? 1.0 : static_cast<double>(spurious_groups) / groups.size();
  return {within >= 0.9 && spurious <= 0.1 && s < 10,
          std::to_string(groups.size()) + " groups, " + std::to_string(offsets) + " offsets, " + fmt(100 * within) +
              "% within +-1 of a period multiple, " + fmt(100 * spurious) + "% spurious groups, " + fmt(s) + " s"};
}

// A6 / A7 --------------------------------------------------------------------------------------

pipeline::RunContext desk_context(const fs::path& out) {
  pipeline::RunContext ctx;
  ctx.cfg = pipeline::load_config({}, {"train.base_lr=1e-3", "train.conv_lr=1e-4"});
  ctx.out = out;
  ctx.threads = default_threads();
  return ctx;
}

double posture_mean(const nn::ConvNetParams<float>& params, const pipeline::RunContext& ctx,
                    const pipeline::Dataset& data, const std::vector<BenchmarkExemplar>& bench) {
  const auto table = pipeline::embed_table(params, ctx.cfg.train.arch(), data.clips, ctx.threads);
  return eval::posture_auc(table, bench).mean;
}

double csv_mean(const fs::path& csv) {
  const std::string text = slurp(csv);
  const auto pos = text.rfind("mean,,,");
  if (pos == std::string::npos) throw Error("no mean row in " + csv.string());
  return std::stod(text.substr(pos + 7));
}

Outcome a6_end_to_end(const fs::path& out, double& trained_auc_r0) {
  const auto t0 = Clock::now();
  fs::remove_all(out);
  const auto ctx = desk_context(out);
  for (const std::string cmd :
       {"synth", "flow", "curriculum", "sample", "train", "mine-reps", "train", "eval-posture"}) {
    pipeline::run(cmd, ctx);
    std::cerr << "  A6 " << cmd << " done at " << fmt(seconds_since(t0)) << " s\n";
  }
  const double final_auc = csv_mean(out / "posture_auc.csv");
  const auto data = pipeline::load_dataset(ctx);
  const auto bench = pipeline::read_benchmark(out / "benchmark.tsv");
  const double random_auc = posture_mean(nn::init_params<float>(ctx.cfg.train.seed), ctx, data, bench);
  trained_auc_r0 = posture_mean(nn::load_checkpoint(pipeline::checkpoint_path(out, 0)).params, ctx, data, bench);
  const double s = seconds_since(t0);
  return {final_auc >= 0.75 && final_auc >= random_auc + 0.15 && s < 1800,
          "AuC " + fmt(final_auc) + " (round 0 " + fmt(trained_auc_r0) + ", random weights " + fmt(random_auc) +
              "), " + fmt(s) + " s"};
}

Outcome a7_curriculum_ablation(const fs::path& out, double seed1_curriculum) {
  const auto t0 = Clock::now();
  const auto ctx = desk_context(out);
  const auto data = pipeline::load_dataset(ctx);
  const auto bench = pipeline::read_benchmark(out / "benchmark.tsv");
  std::vector<sampling::TemporalTuple> tuples;
  std::vector<sampling::SpatialSample> spatial;
  sampling::read_samples(out / "samples.tsv", tuples, spatial);
  const nn::TrainingPool pool{tuples, spatial};
  const auto schedule = curriculum::read_schedule(out / "curriculum.tsv", ctx.cfg.curriculum_update_interval);
  const nn::FrameStore frames(data.clips);

  double sum_c = 0, sum_s = 0;
  bool each = true;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto cfg = ctx.cfg.train;
    cfg.seed = seed;
    double c = seed1_curriculum;
    if (seed != 1) {
      cfg.use_curriculum = true;
      c = posture_mean(nn::train(frames, &schedule, pool, cfg).checkpoint.params, ctx, data, bench);
    }
    cfg.use_curriculum = false;
    const double s = posture_mean(nn::train(frames, nullptr, pool, cfg).checkpoint.params, ctx, data, bench);
    std::cerr << "  A7 seed " << seed << " curriculum " << fmt(c) << " shuffled " << fmt(s) << " at "
              << fmt(seconds_since(t0)) << " s\n";
    sum_c += c;
    sum_s += s;
    each = each && c >= s - 0.02;
    per_seed += " seed" + std::to_string(seed) + " " + fmt(c) + "/" + fmt(s);
  }
  const double mc = sum_c / 3, ms = sum_s / 3;
  return {each, "curriculum/shuffled AuC" + per_seed + "; means " + fmt(mc) + "/" + fmt(ms) + ", " +
                    fmt(seconds_since(t0)) + " s"};
}

// A8 -------------------------------------------------------------------------------------------

Joints random_pose(Rng& rng) {
  Joints j;
  for (int r = 0; r < kNumJoints; ++r) j.row(r) << uniform01(rng) * 64, uniform01(rng) * 64;
  return j;
}

Outcome a8_metrics() {
  Rng rng = make_rng(81, "a8");
  double auc_err = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> pos(1 + uniform_index(rng, 40)), neg(1 + uniform_index(rng, 40));
    const double grain = i % 2 ? 1.0 : 0.0;  // half the instances have many ties
    for (double& v : pos) v = grain ? std::floor(uniform01(rng) * 6) : uniform01(rng);
    for (double& v : neg) v = grain ? std::floor(uniform01(rng) * 5) : uniform01(rng) - 0.2;
    auc_err = std::max(auc_err, std::abs(eval::roc_auc(pos, neg) - oracle::auc_pairs(pos, neg)));
  }

  int ret_mismatch = 0, pcp_mismatch = 0, pckh_mismatch = 0;
  const eval::RetrievalConfig rcfg;
  for (int set = 0; set < 50; ++set) {
    const int nt = 55 + static_cast<int>(uniform_index(rng, 20)), nq = 1 + static_cast<int>(uniform_index(rng, 5));
    std::vector<Joints> tp, qp;
    for (int i = 0; i < nt; ++i) tp.push_back(random_pose(rng));
    for (int i = 0; i < nq; ++i) qp.push_back(random_pose(rng));
    eval::Matrix<double> te(nt, 6), qe(nq, 6);
    for (Eigen::Index k = 0; k < te.size(); ++k) te.data()[k] = std::round(normal(rng) * 4) / 4;  // ties
    for (Eigen::Index k = 0; k < qe.size(); ++k) qe.data()[k] = std::round(normal(rng) * 4) / 4;
    const auto got = eval::retrieval_metrics(qe, qp, te, tp, rcfg);
    const auto want = oracle::retrieval(qe, qp, te, tp, rcfg.ks, rcfg.nn_rank_cutoff, rcfg.rel_margin);
    for (std::size_t r = 0; r < got.size(); ++r) {
      // Hit rates are counts over nq; the pose distance mean differs only by summation order.
      const bool ok = got[r].k == want[r].k && std::lround(got[r].hitrate_nn * nq) == std::lround(want[r].hitrate_nn * nq) &&
                      std::lround(got[r].hitrate_rel * nq) == std::lround(want[r].hitrate_rel * nq) &&
                      std::abs(got[r].mean_pose_distance - want[r].mean_pose_distance) < 1e-9;
      ret_mismatch += ok ? 0 : 1;
    }
    for (int q = 0; q < nq; ++q) {
      Joints pred = qp[static_cast<std::size_t>(q)];
      Joints gt = pred;
      for (int j = 0; j < kNumJoints; ++j) pred.row(j) += Eigen::RowVector2d(normal(rng), normal(rng)) * 6;
      if (q == 0) gt.row(kLeftElbow) = gt.row(kLeftShoulder);  // one zero-length part
      const auto pc = eval::pcp(pred, gt, eval::default_parts());
      const auto po = oracle::pcp(pred, gt, eval::default_parts(), 0.5);
      for (std::size_t k = 0; k < po.size(); ++k) {
        pcp_mismatch += (pc.parts[k].evaluated == po[k].evaluated && pc.parts[k].correct == po[k].correct) ? 0 : 1;
      }
      const auto hk = eval::pckh(pred, gt);
      const auto ho = oracle::pckh(pred, gt, 0.5);
      for (int j = 0; j < kNumJoints; ++j) pckh_mismatch += hk.correct[static_cast<std::size_t>(j)] == ho[static_cast<std::size_t>(j)] ? 0 : 1;
    }
  }
  const bool pass = auc_err < 1e-12 && ret_mismatch == 0 && pcp_mismatch == 0 && pckh_mismatch == 0;
  return {pass, "roc_auc max error " + fmt(auc_err, 3) + "; mismatches retrieval " + std::to_string(ret_mismatch) +
                    ", pcp " + std::to_string(pcp_mismatch) + ", pckh " + std::to_string(pckh_mismatch)};
}

// A9 -------------------------------------------------------------------------------------------

Outcome a9_determinism(const fs::path& root) {
  const auto t0 = Clock::now();
  const std::vector<std::string> overrides = {"synth.n_clips=4",   "synth.n_frames=120",  "train.iterations=20",
                                              "miner.retrain_iterations=10", "curriculum.update_interval=3",
                                              "flow.iterations=40", "miner.kernel_size=3"};
  const std::vector<std::string> commands = {"synth", "flow",  "curriculum",   "sample",         "train",    "mine-reps",
                                             "train", "embed", "eval-posture", "eval-retrieval", "eval-pose"};
  auto run_all = [&](const fs::path& out, int threads) {
    fs::remove_all(out);
    pipeline::RunContext ctx;
    ctx.cfg = pipeline::load_config({}, overrides);
    ctx.out = out;
    ctx.threads = threads;
    for (const auto& c : commands) pipeline::run(c, ctx);
  };
  run_all(root / "a", 1);
  run_all(root / "b", 1);
  run_all(root / "c", 4);
  const std::vector<std::string> artifacts = {"loss_log.tsv",    "loss_log_r1.tsv", "repetitions_r1.tsv",
                                              "posture_auc.csv", "retrieval.csv",   "pcp.csv",
                                              "pckh.csv",        "checkpoint_r1.pfck", "embeddings.pemb"};
  std::string differing;
  for (const auto& f : artifacts) {
    const std::string a = slurp(root / "a" / f);
    if (a.empty() || a != slurp(root / "b" / f) || a != slurp(root / "c" / f)) differing += " " + f;
  }
  return {differing.empty(), differing.empty() ? std::to_string(artifacts.size()) +
                                                     " artifacts identical over 2 runs and threads 1/4, " +
                                                     fmt(seconds_since(t0)) + " s"
                                               : "differ:" + differing};
}

// A10 ------------------------------------------------------------------------------------------

Outcome a10_flow() {
  auto texture = [](int size, double dx, double dy) {
    Grid<double> g(size, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double u = x - dx, v = y - dy;
        g(y, x) = 128 + 40 * std::sin(0.31 * u + 0.2 * v) + 30 * std::cos(0.17 * u - 0.29 * v) +
                  20 * std::sin(0.11 * u + 0.37 * v + 1.0);
      }
    }
    return g;
  };
  const std::vector<std::pair<double, double>> shifts = {{1, 0}, {0, -1}, {0.5, 0.5}, {-0.75, 0.25}};
  double worst = 0;
  for (const auto& [dx, dy] : shifts) {
    const auto f = flow::estimate_flow<double>(texture(48, 0, 0), texture(48, dx, dy), 15.0, 200);
    const auto inner = [](const Grid<double>& g) { return g.block(4, 4, g.rows() - 8, g.cols() - 8).mean(); };
    worst = std::max({worst, std::abs(inner(f.u) - dx), std::abs(inner(f.v) - dy)});
  }
  return {worst <= 0.25, "max mean-flow error " + fmt(worst) + " px over " + std::to_string(shifts.size()) +
                             " shifts"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_arg = (fs::temp_directory_path() / "poseforge_acceptance").string();
  std::vector<std::string> expected_failures;
  app.add_option("work", work_arg, "Working directory for the pipeline runs");
  app.add_option("--expect-fail", expected_failures, "Criteria with a recorded, analysed failure");
  CLI11_PARSE(app, argc, argv);
  const fs::path work = work_arg;
  fs::create_directories(work);
  int failures = 0, unexpected = 0;
  auto expected = [&](const std::string& id) {
    return std::find(expected_failures.begin(), expected_failures.end(), id) != expected_failures.end();
  };
  auto report = [&](const std::string& id, const std::string& title, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    unexpected += o.pass || expected(id) ? 0 : 1;
    std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << title << ": " << o.detail;
    if (expected(id)) std::cout << (o.pass ? " [listed as expected failure]" : " [expected failure]");
    std::cout << std::endl;
  };
  double r0_auc = -1;
  report("A1", "label oracles", a1_labels);
  report("A2", "gradient check", a2_gradcheck);
  report("A3", "Adam scalar step", a3_adam);
  report("A4", "curriculum ordering", a4_curriculum);
  report("A5", "repetition recovery", a5_repetitions);
  report("A6", "end-to-end desk run", [&] { return a6_end_to_end(work / "desk", r0_auc); });
  report("A7", "curriculum ablation", [&] {
    if (r0_auc < 0) return Outcome{false, "needs the A6 run"};
    return a7_curriculum_ablation(work / "desk", r0_auc);
  });
  report("A8", "metric oracles", a8_metrics);
  report("A9", "determinism", [&] { return a9_determinism(work / "determinism"); });
  report("A10", "flow sanity", a10_flow);
  std::cout << (failures == 0 ? std::string("all criteria passed")
                              : std::to_string(failures) + " criteria failed, " + std::to_string(unexpected) +
                                    " unexpectedly")
            << std::endl;
  return unexpected == 0 ? 0 : 1;
}
