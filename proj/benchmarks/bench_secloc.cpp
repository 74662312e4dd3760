// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "secloc/channel.hpp"
#include "secloc/features.hpp"
#include "secloc/knn.hpp"
#include "secloc/model.hpp"
#include "secloc/tdoa_solver.hpp"

namespace {

using namespace secloc;

EnvironmentMap hall() {
  EnvironmentMap env;
  env.bounds = {0, 0, 40, 30};
  const Point2D xy[8] = {{0, 0}, {20, 0}, {40, 0}, {40, 15}, {40, 30}, {20, 30}, {0, 30}, {0, 15}};
  std::vector<Anchor> a;
  for (int i = 0; i < 8; ++i) a.push_back({i, xy[i], 3.0});
  env.anchor_set = AnchorSet(a);
  env.nlos_zones.push_back({{2, 2, 12, 12}, {3, 4, 5}});
  return env;
}

NormalizationSpec norm() {
  NormalizationSpec n;
  n.bounds = {0, 0, 40, 30};
  return n;
}

void BM_SynthRecord(benchmark::State& state) {
  const auto env = hall();
  const ChannelConfig cfg;
  int i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(synth_record({13.0, 9.0}, env, cfg, 0, i++));
}
BENCHMARK(BM_SynthRecord);

void BM_BuildBundle(benchmark::State& state) {
  const auto env = hall();
  const auto rec = synth_record({13.0, 9.0}, env, ChannelConfig{}, 0, 0);
  const auto n = norm();
  for (auto _ : state) benchmark::DoNotOptimize(build_bundle(rec, env.anchor_set, n));
}
BENCHMARK(BM_BuildBundle);

void BM_ModelForward(benchmark::State& state) {
  const auto env = hall();
  const auto rec = synth_record({13.0, 9.0}, env, ChannelConfig{}, 0, 0);
  const auto arch = ArchConfig::variant(kVariantNames[static_cast<std::size_t>(state.range(0))]);
  const LocalizerModel model(arch, norm());
  const auto params = model.init_params(1);
  const auto bundle = build_bundle(rec, env.anchor_set, norm());
  ModelWorkspace ws;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(params, bundle, ws));
  state.SetLabel(kVariantNames[static_cast<std::size_t>(state.range(0))]);
}
BENCHMARK(BM_ModelForward)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_ModelLossAndGrad(benchmark::State& state) {
  const auto env = hall();
  const auto rec = synth_record({13.0, 9.0}, env, ChannelConfig{}, 0, 0);
  const LocalizerModel model(ArchConfig::full(), norm());
  const auto params = model.init_params(1);
  auto grads = params.zeros_like();
  const auto bundle = build_bundle(rec, env.anchor_set, norm());
  ModelWorkspace ws;
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_grad(params, bundle, rec.truth, grads, ws));
}
BENCHMARK(BM_ModelLossAndGrad)->Unit(benchmark::kMicrosecond);

void BM_TdoaSolve(benchmark::State& state) {
  const auto env = hall();
  const auto rec = synth_record({13.0, 9.0}, env, ChannelConfig{}, 0, 0);
  const auto td = tdoa_features(record_toas(rec, env.anchor_set));
  for (auto _ : state) benchmark::DoNotOptimize(solve_tdoa(env.anchor_set, td.reference_anchor, td.dt));
}
BENCHMARK(BM_TdoaSolve)->Unit(benchmark::kMicrosecond);

void BM_KnnPredict(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<FingerprintVector> feats(n, FingerprintVector(40));
  std::vector<Point2D> pos(n);
  for (auto& f : feats) {
    for (auto& v : f) v = g(rng);
  }
  const FingerprintDb db(feats, pos);
  KnnConfig cfg;
  cfg.k = 7;
  for (auto _ : state) benchmark::DoNotOptimize(knn_predict(db, feats[n / 2], cfg));
}
BENCHMARK(BM_KnnPredict)->Arg(1000)->Arg(5000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
