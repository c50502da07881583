// Serial reference kernels vs their OpenMP versions.
#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>

#include "emgtl/features.hpp"
#include "emgtl/nn/kernels.hpp"
#include "emgtl/synthetic.hpp"
#include "emgtl/timefreq.hpp"

using namespace emgtl;
namespace k = emgtl::nn::kernels;

namespace {

double best_ms(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void row(const std::string& name, double serial, double parallel, bool same) {
  std::cout << std::left << std::setw(28) << name << std::right << std::fixed << std::setprecision(3)
            << std::setw(12) << serial << std::setw(12) << parallel << std::setw(10) << serial / parallel
            << std::setw(10) << (same ? "yes" : "NO") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel timings"};
  int reps = 5;
  std::size_t batch = 128;
  int threads = 0;
  app.add_option("--reps", reps);
  app.add_option("--batch", batch);
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  std::cout << "threads " << omp_get_max_threads() << ", best of " << reps << " runs (ms)\n";
  std::cout << std::left << std::setw(28) << "kernel" << std::right << std::setw(12) << "serial" << std::setw(12)
            << "openmp" << std::setw(10) << "speedup" << std::setw(10) << "equal" << '\n';

  std::mt19937_64 rng(1);

  // conv layer shaped like the first CWT block
  const k::ConvShape cs{batch, 12, 8, 7, 24, 3, 3};
  const auto in = random_vector(cs.batch * cs.in_channels * cs.in_h * cs.in_w, rng);
  const auto w = random_vector(cs.out_channels * cs.in_channels * cs.kernel_h * cs.kernel_w, rng);
  const auto b = random_vector(cs.out_channels, rng);
  const std::size_t out_n = cs.batch * cs.out_channels * cs.out_h() * cs.out_w();
  std::vector<double> o1(out_n), o2(out_n);
  row("conv2d_forward", best_ms(reps, [&] { k::serial::conv2d_forward(cs, in.data(), w.data(), b.data(), o1.data()); }),
      best_ms(reps, [&] { k::omp::conv2d_forward(cs, in.data(), w.data(), b.data(), o2.data()); }), o1 == o2);

  const auto go = random_vector(out_n, rng);
  std::vector<double> gi1(in.size()), gi2(in.size());
  row("conv2d_backward_input",
      best_ms(reps, [&] { k::serial::conv2d_backward_input(cs, go.data(), w.data(), gi1.data()); }),
      best_ms(reps, [&] { k::omp::conv2d_backward_input(cs, go.data(), w.data(), gi2.data()); }), gi1 == gi2);

  std::vector<double> gw1(w.size()), gw2(w.size()), gb1(b.size()), gb2(b.size());
  const double ps = best_ms(reps, [&] {
    std::fill(gw1.begin(), gw1.end(), 0.0);
    std::fill(gb1.begin(), gb1.end(), 0.0);
    k::serial::conv2d_backward_params(cs, in.data(), go.data(), gw1.data(), gb1.data());
  });
  const double po = best_ms(reps, [&] {
    std::fill(gw2.begin(), gw2.end(), 0.0);
    std::fill(gb2.begin(), gb2.end(), 0.0);
    k::omp::conv2d_backward_params(cs, in.data(), go.data(), gw2.data(), gb2.data());
  });
  row("conv2d_backward_params", ps, po, gw1 == gw2 && gb1 == gb2);

  // dense layer shaped like the enhanced-raw head
  const k::DenseShape ds{batch, 1088, 500};
  const auto din = random_vector(ds.batch * ds.in_features, rng);
  const auto dw = random_vector(ds.out_features * ds.in_features, rng);
  const auto db = random_vector(ds.out_features, rng);
  std::vector<double> d1(ds.batch * ds.out_features), d2(d1.size());
  row("dense_forward", best_ms(reps, [&] { k::serial::dense_forward(ds, din.data(), dw.data(), db.data(), d1.data()); }),
      best_ms(reps, [&] { k::omp::dense_forward(ds, din.data(), dw.data(), db.data(), d2.data()); }), d1 == d2);

  // window-level transforms and features
  SyntheticSpec syn;
  syn.subjects = 1;
  syn.rounds = 1;
  syn.cycles = 1;
  const auto recs = make_synthetic_recordings(syn);
  std::vector<Window> windows;
  for (const auto& r : recs) {
    auto s = slice_windows(r);
    windows.insert(windows.end(), s.begin(), s.end());
  }
  windows.resize(std::min<std::size_t>(windows.size(), 1024));

  std::vector<CwtTensor> c1, c2;
  row("cwt_batch (" + std::to_string(windows.size()) + ")",
      best_ms(reps, [&] { c1 = cwt_batch(windows, Backend::Serial); }),
      best_ms(reps, [&] { c2 = cwt_batch(windows, Backend::OpenMP); }),
      c1.size() == c2.size() && std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(CwtTensor)) == 0);

  std::vector<SpectroTensor> s1, s2;
  row("spectrogram_batch", best_ms(reps, [&] { s1 = spectrogram_batch(windows, Backend::Serial); }),
      best_ms(reps, [&] { s2 = spectrogram_batch(windows, Backend::OpenMP); }),
      s1.size() == s2.size() && std::memcmp(s1.data(), s2.data(), s1.size() * sizeof(SpectroTensor)) == 0);

  for (FeatureSet set : {FeatureSet::TD, FeatureSet::NinaPro, FeatureSet::SampEnPipeline}) {
    std::vector<FeatureVector> f1, f2;
    const double fs = best_ms(reps, [&] { f1 = extract_features(windows, set, {}, Backend::Serial); });
    const double fo = best_ms(reps, [&] { f2 = extract_features(windows, set, {}, Backend::OpenMP); });
    bool same = f1.size() == f2.size();
    for (std::size_t i = 0; same && i < f1.size(); ++i) same = f1[i].values == f2[i].values;
    row("features " + to_string(set), fs, fo, same);
  }
  return 0;
}
