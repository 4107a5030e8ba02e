#include "dwc/diagnose.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dwc/error.hpp"

namespace dwc {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& p, const std::string& provenance, const char* header) {
  std::ofstream out(p);
  if (!out) fail(Errc::Io, "cannot write " + p.string());
  out << "# " << provenance << "\n" << header << "\n";
  return out;
}

}  // namespace

ChannelActivations split_channels(const Tensor& batch, std::size_t sample) {
  const auto values = batch.sample(sample);
  const Shape s = batch.sample_shape();
  const std::size_t c = s.size() >= 3 ? s.back() : 1;
  ChannelActivations out(c);
  for (auto& ch : out) ch.reserve(values.size() / c);
  for (std::size_t i = 0; i < values.size(); ++i) out[i % c].push_back(values[i]);
  return out;
}

Diagnostics diagnose(const Model& model, const std::map<std::string, TargetDistribution>& targets,
                     const Dataset& samples, const DiagnoseOptions& opts) {
  if (targets.empty()) fail(Errc::InvalidConfig, "diagnose: no targets");
  if (samples.size() == 0) fail(Errc::Empty, "diagnose: no samples");
  const std::string layer = opts.layer.empty() ? targets.begin()->first : opts.layer;
  const auto target_it = targets.find(layer);
  if (target_it == targets.end()) fail(Errc::UnknownLayer, "diagnose: no target for layer '" + layer + "'");
  const CorrectionConfig cfg =
      opts.placement == Placement::AfterConv ? opts.config.with_preserve_zeros(false) : opts.config;
  const Model corrected = attach_correction(model, targets, cfg, opts.placement);

  Diagnostics d;
  for (const auto& [name, t] : targets) {
    for (std::size_t i = 0; i < t.n(); ++i) d.variance.push_back({name, i, t.t[i], t.variance[i]});
  }

  std::vector<std::string> base_taps;
  for (const auto& l : model.layers) base_taps.push_back(l.name);
  std::vector<std::string> corr_taps;
  for (const auto& name : base_taps) {
    corr_taps.push_back(corrected.find(name + "/correction") ? name + "/correction" : name);
  }
  const auto base = forward(model, samples.images, base_taps);
  const auto corr = forward(corrected, samples.images, corr_taps);

  const Tensor& site = base.tapped.at(layer);
  const std::size_t dumps = std::min(opts.samples, samples.size());
  for (std::size_t s = 0; s < dumps; ++s) {
    const auto a = site.sample(s);
    std::vector<double> before(a.begin(), a.end());
    std::vector<double> after = correct<double>(before, target_it->second, cfg);
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    for (std::size_t i = 0; i < before.size(); ++i) d.before_after.push_back({s, i, before[i], after[i]});
  }

  if (samples.size() >= 2) {
    std::vector<ChannelActivations> maps;
    for (std::size_t s = 0; s < samples.size(); ++s) maps.push_back(split_channels(site, s));
    for (std::size_t q = 0; q < std::min(opts.queries, samples.size()); ++q) {
      const std::size_t m = channel_dissimilarity(q, maps);
      double dist = 0.0;
      for (std::size_t c = 0; c < maps[q].size(); ++c) {
        auto a = maps[q][c], b = maps[m][c];
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        dist += wasserstein_1d_sorted(a, b, 1.0);
      }
      d.dissimilar.push_back({q, m, dist});
    }
  }

  for (std::size_t k = 0; k < base_taps.size(); ++k) {
    const Tensor& u = base.tapped.at(base_taps[k]);
    const Tensor& c = corr.tapped.at(corr_taps[k]);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(static_cast<double>(c.data[i]) - u.data[i]);
    d.map_difference.push_back({base_taps[k], u.size() ? s / static_cast<double>(u.size()) : 0.0});
  }
  return d;
}

void write_diagnostics(const std::filesystem::path& dir, const Diagnostics& d, const std::string& provenance) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
  {
    auto out = open_csv(dir / "variance_profile.csv", provenance, "layer,rank,t,variance");
    for (const auto& r : d.variance) out << r.layer << ',' << r.rank << ',' << num(r.t) << ',' << num(r.variance) << "\n";
  }
  {
    auto out = open_csv(dir / "before_after.csv", provenance, "sample,rank,before,after");
    for (const auto& r : d.before_after) out << r.sample << ',' << r.rank << ',' << num(r.before) << ',' << num(r.after) << "\n";
  }
  {
    auto out = open_csv(dir / "dissimilar.csv", provenance, "query,match,distance");
    for (const auto& r : d.dissimilar) out << r.query << ',' << r.match << ',' << num(r.distance) << "\n";
  }
  {
    auto out = open_csv(dir / "map_difference.csv", provenance, "layer,mean_abs_difference");
    for (const auto& r : d.map_difference) out << r.layer << ',' << num(r.mean_abs_difference) << "\n";
  }
}

}  // namespace dwc
