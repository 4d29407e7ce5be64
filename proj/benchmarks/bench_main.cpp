#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "tabsense/corpus.hpp"
#include "tabsense/crf.hpp"
#include "tabsense/featurizer.hpp"
#include "tabsense/mat.hpp"
#include "tabsense/neural.hpp"
#include "tabsense/rng.hpp"
#include "tabsense/topics.hpp"

using namespace tabsense;

namespace {

Column sample_column(size_t rows, uint64_t seed) {
  static const char* words[] = {"amsterdam", "beirut", "cairo", "denver", "34.5",
                                "oslo",      "1999",   "n/a",   "quito",  "7"};
  Rng rng(seed);
  Column col;
  col.header_raw = "birth place (city)";
  for (size_t r = 0; r < rows; ++r) {
    std::string cell = words[rng.below(10)];
    if (rng.below(3) == 0) cell += " " + std::string(words[rng.below(10)]);
    col.cells.push_back(cell);
  }
  return col;
}

void BM_FeaturizeColumn(benchmark::State& state) {
  FeatureConfig fc;
  Column col = sample_column(static_cast<size_t>(state.range(0)), 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(featurize_column(col, fc));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FeaturizeColumn)->Arg(16)->Arg(256)->Arg(4096);

ColumnFeatures random_features(const NetworkConfig& nc, uint64_t seed) {
  Rng rng(seed);
  auto fill = [&rng](std::vector<double>& v, int n) {
    v.assign(static_cast<size_t>(n), 0.0);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
  };
  ColumnFeatures f;
  fill(f.char_v, nc.d_char);
  fill(f.word_v, nc.d_word);
  fill(f.para_v, nc.d_para);
  fill(f.stat_v, kStatDim);
  return f;
}

void BM_ClassifierForward(benchmark::State& state) {
  NetworkConfig nc;
  nc.d_char = 86;
  nc.d_word = 128;
  nc.d_para = 128;
  nc.d_topic = 20;
  nc.use_topic = true;
  nc.type_count = 78;
  nc.seed = 3;
  ClassifierModel model = init_network(nc);
  ColumnFeatures f = random_features(nc, 21);
  TopicVector theta;
  theta.theta.assign(20, 0.05);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(model, f, &theta, Mode::kEval));
  }
}
BENCHMARK(BM_ClassifierForward);

struct ChainInstance {
  Mat unaries;
  Mat pairwise;
};

ChainInstance chain_instance(size_t m, size_t T, uint64_t seed) {
  Rng rng(seed);
  ChainInstance c{Mat(m, T), Mat(T, T)};
  for (double& x : c.unaries.data) x = rng.uniform(-3.0, 3.0);
  for (double& x : c.pairwise.data) x = rng.uniform(-1.0, 1.0);
  return c;
}

void BM_ViterbiDecode(benchmark::State& state) {
  ChainInstance c =
      chain_instance(static_cast<size_t>(state.range(0)), static_cast<size_t>(state.range(1)), 31);
  for (auto _ : state) {
    benchmark::DoNotOptimize(map_decode(c.unaries, c.pairwise));
  }
}
BENCHMARK(BM_ViterbiDecode)->Args({8, 78})->Args({32, 78});

void BM_LogPartition(benchmark::State& state) {
  ChainInstance c =
      chain_instance(static_cast<size_t>(state.range(0)), static_cast<size_t>(state.range(1)), 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_partition(c.unaries, c.pairwise));
  }
}
BENCHMARK(BM_LogPartition)->Args({8, 78})->Args({32, 78});

void BM_Marginals(benchmark::State& state) {
  ChainInstance c =
      chain_instance(static_cast<size_t>(state.range(0)), static_cast<size_t>(state.range(1)), 33);
  for (auto _ : state) {
    benchmark::DoNotOptimize(marginals(c.unaries, c.pairwise));
  }
}
BENCHMARK(BM_Marginals)->Args({8, 78})->Args({32, 78});

void BM_GibbsSweep(benchmark::State& state) {
  const int V = 2000;
  const int K = 20;
  Rng rng(41);
  std::vector<std::vector<int>> docs(static_cast<size_t>(state.range(0)));
  for (auto& doc : docs) {
    doc.resize(40);
    for (int& w : doc) w = static_cast<int>(rng.below(V));
  }
  size_t tokens = docs.size() * 40;
  GibbsLda sampler(std::move(docs), V, K, 50.0 / K, 0.01, 5);
  for (auto _ : state) {
    sampler.sweep();
  }
  state.SetItemsProcessed(state.iterations() * tokens);
}
BENCHMARK(BM_GibbsSweep)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
