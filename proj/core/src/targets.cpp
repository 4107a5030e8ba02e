#include "dwc/targets.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

#include "dwc/error.hpp"

namespace dwc {

namespace {

std::mutex g_sink_mutex;
std::function<void(const std::string&)> g_sink;

void warn(const std::string& msg) {
  std::lock_guard lock(g_sink_mutex);
  if (g_sink) g_sink(msg);
}

}  // namespace

void set_warning_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard lock(g_sink_mutex);
  g_sink = std::move(sink);
}

TargetAccumulator::TargetAccumulator(std::string layer_id, std::size_t n)
    : layer_id_(std::move(layer_id)), sum_sorted_(n, 0.0), sum_sq_sorted_(n, 0.0) {
  if (n == 0) fail(Errc::Empty, "accumulator for '" + layer_id_ + "' with n = 0");
}

void TargetAccumulator::add_sorted(std::vector<double>& c) {
  double mean = 0.0;
  for (const double v : c) mean += v;
  mean /= static_cast<double>(c.size());
  for (double& v : c) v -= mean;
  std::sort(c.begin(), c.end());
  for (std::size_t i = 0; i < c.size(); ++i) {
    sum_sorted_[i] += c[i];
    sum_sq_sorted_[i] += c[i] * c[i];
  }
  ++count_;
}

void TargetAccumulator::accumulate(std::span<const double> a) {
  if (a.size() != n()) {
    fail(Errc::LengthMismatch, "accumulate '" + layer_id_ + "': length " + std::to_string(a.size()) +
                                   ", expected " + std::to_string(n()));
  }
  detail::require_finite(a, "accumulate");
  scratch_.assign(a.begin(), a.end());
  add_sorted(scratch_);
}

void TargetAccumulator::accumulate(std::span<const float> a) {
  if (a.size() != n()) {
    fail(Errc::LengthMismatch, "accumulate '" + layer_id_ + "': length " + std::to_string(a.size()) +
                                   ", expected " + std::to_string(n()));
  }
  detail::require_finite(a, "accumulate");
  scratch_.assign(a.begin(), a.end());
  add_sorted(scratch_);
}

double TargetAccumulator::min_raw_variance() const {
  if (count_ == 0) fail(Errc::EmptyAccumulator, "accumulator '" + layer_id_ + "' is empty");
  const double m = static_cast<double>(count_);
  double lo = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const double t = sum_sorted_[i] / m;
    lo = std::min(lo, sum_sq_sorted_[i] / m - t * t);
  }
  return lo;
}

TargetDistribution TargetAccumulator::finalize() const {
  if (count_ == 0) fail(Errc::EmptyAccumulator, "accumulator '" + layer_id_ + "' is empty");
  const double m = static_cast<double>(count_);
  TargetDistribution t;
  t.layer_id = layer_id_;
  t.sample_count = count_;
  t.t.resize(n());
  t.variance.resize(n());
  std::size_t clamped = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    t.t[i] = sum_sorted_[i] / m;
    const double v = sum_sq_sorted_[i] / m - t.t[i] * t.t[i];
    if (v < 0.0) {
      ++clamped;
      worst = std::min(worst, v);
    }
    t.variance[i] = std::max(0.0, v);
  }
  if (clamped > 0) {
    warn("target '" + layer_id_ + "': clamped " + std::to_string(clamped) +
         " negative variance entries (most negative " + std::to_string(worst) + ")");
  }
  return t;
}

TargetAccumulator merge(const TargetAccumulator& a, const TargetAccumulator& b) {
  if (a.layer_id() != b.layer_id() || a.n() != b.n()) {
    fail(Errc::LayerMismatch, "merge: '" + a.layer_id() + "' (n=" + std::to_string(a.n()) + ") with '" +
                                  b.layer_id() + "' (n=" + std::to_string(b.n()) + ")");
  }
  TargetAccumulator out(a.layer_id_, a.n());
  for (std::size_t i = 0; i < a.n(); ++i) {
    out.sum_sorted_[i] = a.sum_sorted_[i] + b.sum_sorted_[i];
    out.sum_sq_sorted_[i] = a.sum_sq_sorted_[i] + b.sum_sq_sorted_[i];
  }
  out.count_ = a.count() + b.count();
  return out;
}

std::map<std::string, TargetDistribution> build_targets(const Model& model, const Dataset& data,
                                                        std::span<const std::string> sites,
                                                        const BuildOptions& opts) {
  if (data.size() == 0) fail(Errc::Empty, "build_targets: empty dataset");
  if (sites.empty()) fail(Errc::InvalidConfig, "build_targets: no sites selected");
  if (opts.subsample == 0 || opts.batch_size == 0) fail(Errc::InvalidConfig, "build_targets: zero subsample or batch");
  if (data.sample_shape() != model.input_shape) {
    fail(Errc::SizeMismatch, "build_targets: data samples are " + shape_string(data.sample_shape()) +
                                 " but the model expects " + shape_string(model.input_shape));
  }
  const auto shapes = model.layer_shapes();
  std::vector<std::size_t> sizes;
  for (const auto& s : sites) {
    const auto idx = model.find(s);
    if (!idx) fail(Errc::UnknownTap, "build_targets: no layer named '" + s + "'");
    sizes.push_back(shape_product(shapes[*idx]));
  }

  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < data.size(); i += opts.subsample) picked.push_back(i);
  const std::size_t chunks = (picked.size() + opts.batch_size - 1) / opts.batch_size;

  auto fresh = [&] {
    std::vector<TargetAccumulator> accs;
    for (std::size_t k = 0; k < sites.size(); ++k) accs.emplace_back(sites[k], sizes[k]);
    return accs;
  };
  std::vector<std::vector<TargetAccumulator>> partial(chunks);
  auto run_chunk = [&](std::size_t c) {
    const std::size_t b = c * opts.batch_size;
    const std::size_t e = std::min(picked.size(), b + opts.batch_size);
    const Dataset part = data.subset(std::span(picked).subspan(b, e - b));
    const auto out = forward(model, part.images, sites);
    auto accs = fresh();
    for (std::size_t k = 0; k < sites.size(); ++k) {
      const Tensor& tap = out.tapped.at(sites[k]);
      for (std::size_t r = 0; r < tap.batch(); ++r) accs[k].accumulate(tap.sample(r));
    }
    partial[c] = std::move(accs);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(opts.threads, chunks));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  auto total = fresh();
  for (const auto& accs : partial) {
    for (std::size_t k = 0; k < sites.size(); ++k) total[k] = merge(total[k], accs[k]);
  }
  std::map<std::string, TargetDistribution> result;
  for (const auto& acc : total) result.emplace(acc.layer_id(), acc.finalize());
  return result;
}

}  // namespace dwc
