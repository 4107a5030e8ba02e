#include "dwc/store.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <system_error>
#include <type_traits>

#include "dwc/error.hpp"

namespace dwc {

using nlohmann::json;

namespace {

constexpr std::size_t kHeaderSize = 20;
constexpr std::size_t kDigestSize = 32;

const char* magic_for(ArchiveKind k) {
  switch (k) {
    case ArchiveKind::Model: return "DWCM";
    case ArchiveKind::Targets: return "DWCT";
    case ArchiveKind::Dataset: return "DWCD";
  }
  return "????";
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t, std::int64_t>, T>>;
  U u;
  std::memcpy(&u, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t, std::int64_t>, T>>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

std::uint32_t get_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void digest(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, std::uint8_t* out) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) fail(Errc::Io, "cannot allocate a digest context");
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, a.data(), a.size()) == 1 &&
                  EVP_DigestUpdate(ctx, b.data(), b.size()) == 1 && EVP_DigestFinal_ex(ctx, out, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok || len != kDigestSize) fail(Errc::Io, "SHA-256 computation failed");
}

std::string to_hex(const std::uint8_t* d, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    s[2 * i] = digits[d[i] >> 4];
    s[2 * i + 1] = digits[d[i] & 15];
  }
  return s;
}

// Appends typed arrays to a payload and describes them in JSON.
class PayloadWriter {
 public:
  json f32(std::span<const float> v, const Shape& shape = {}) {
    json d = describe("f32", v.size(), shape);
    for (const float x : v) put_le(bytes, x);
    return d;
  }
  json f64(std::span<const double> v) {
    json d = describe("f64", v.size(), {});
    for (const double x : v) put_le(bytes, x);
    return d;
  }
  json i32(std::span<const int> v) {
    json d = describe("i32", v.size(), {});
    for (const int x : v) put_le(bytes, static_cast<std::int32_t>(x));
    return d;
  }
  json u8(std::span<const std::uint8_t> v) {
    json d = describe("u8", v.size(), {});
    bytes.insert(bytes.end(), v.begin(), v.end());
    return d;
  }
  std::vector<std::uint8_t> bytes;

 private:
  json describe(const char* dtype, std::size_t count, const Shape& shape) const {
    json d = {{"dtype", dtype}, {"offset", bytes.size()}, {"count", count}};
    if (!shape.empty()) d["shape"] = shape;
    return d;
  }
};

class PayloadReader {
 public:
  explicit PayloadReader(std::span<const std::uint8_t> p) : payload_(p) {}

  std::vector<float> f32(const json& d) const { return read<float>(d, "f32"); }
  std::vector<double> f64(const json& d) const { return read<double>(d, "f64"); }
  std::vector<int> i32(const json& d) const {
    auto raw = read<std::int32_t>(d, "i32");
    return std::vector<int>(raw.begin(), raw.end());
  }
  std::span<const std::uint8_t> u8(const json& d) const {
    const auto [off, count] = locate(d, "u8", 1);
    return payload_.subspan(off, count);
  }
  Tensor tensor(const json& d) const {
    Shape shape = d.at("shape").get<Shape>();
    return Tensor(std::move(shape), f32(d));
  }

 private:
  std::pair<std::size_t, std::size_t> locate(const json& d, const char* dtype, std::size_t width) const {
    if (d.at("dtype").get<std::string>() != dtype) fail(Errc::Malformed, std::string("expected dtype ") + dtype);
    const auto off = d.at("offset").get<std::size_t>();
    const auto count = d.at("count").get<std::size_t>();
    if (off > payload_.size() || count > (payload_.size() - off) / width) {
      fail(Errc::Malformed, "array descriptor points outside the payload");
    }
    return {off, count};
  }
  template <typename T>
  std::vector<T> read(const json& d, const char* dtype) const {
    const auto [off, count] = locate(d, dtype, sizeof(T));
    std::vector<T> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = get_le<T>(payload_.data() + off + i * sizeof(T));
    return v;
  }
  std::span<const std::uint8_t> payload_;
};

json parse_meta(const Archive& a) {
  try {
    return json::parse(a.metadata);
  } catch (const json::exception& e) {
    fail(Errc::Malformed, std::string("metadata is not valid JSON: ") + e.what());
  }
}

json parse_extra(const std::string& extra) {
  try {
    json j = json::parse(extra.empty() ? std::string("{}") : extra);
    if (!j.is_object()) fail(Errc::InvalidConfig, "archive info must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    fail(Errc::InvalidConfig, std::string("archive info is not valid JSON: ") + e.what());
  }
}

// Converts nlohmann errors raised while walking a decoded document.
template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(Errc::Malformed, std::string(what) + ": " + e.what());
  }
}

std::string save_archive(const std::filesystem::path& path, Archive a) {
  const auto bytes = encode_archive(a);
  write_file_atomic(path, bytes);
  return to_hex(bytes.data() + bytes.size() - kDigestSize, kDigestSize);
}

Archive load_archive(const std::filesystem::path& path, ArchiveKind kind) {
  const auto bytes = read_file(path);
  try {
    return decode_archive(bytes, kind);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

json target_meta(const TargetDistribution& t, PayloadWriter& w) {
  return {{"layer_id", t.layer_id},
          {"n", t.n()},
          {"sample_count", t.sample_count},
          {"t", w.f64(t.t)},
          {"variance", w.f64(t.variance)}};
}

TargetDistribution target_from(const json& j, const PayloadReader& r) {
  TargetDistribution t;
  t.layer_id = j.at("layer_id").get<std::string>();
  t.sample_count = j.at("sample_count").get<std::size_t>();
  t.t = r.f64(j.at("t"));
  t.variance = r.f64(j.at("variance"));
  if (t.t.size() != j.at("n").get<std::size_t>()) fail(Errc::Malformed, "target length differs from n");
  return t;
}

const char* padding_name(Padding p) { return p == Padding::Same ? "same" : "valid"; }
Padding parse_padding(const std::string& s) {
  if (s == "same") return Padding::Same;
  if (s == "valid") return Padding::Valid;
  fail(Errc::Malformed, "unknown padding '" + s + "'");
}

json layer_meta(const Layer& l, PayloadWriter& w) {
  json j = {{"name", l.name}, {"kind", std::string(kind_name(l.op))}};
  json& t = j["tensors"] = json::object();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Dense>) {
          t["weight"] = w.f32(p.weight.data, p.weight.shape);
          t["bias"] = w.f32(p.bias);
        } else if constexpr (std::is_same_v<T, Conv2d>) {
          t["kernel"] = w.f32(p.kernel.data, p.kernel.shape);
          t["bias"] = w.f32(p.bias);
          j["stride"] = p.stride;
          j["padding"] = padding_name(p.padding);
        } else if constexpr (std::is_same_v<T, BatchNorm>) {
          t["gamma"] = w.f32(p.gamma);
          t["beta"] = w.f32(p.beta);
          t["mean"] = w.f32(p.mean);
          t["var"] = w.f32(p.var);
          j["eps"] = p.eps;
        } else if constexpr (std::is_same_v<T, GroupNorm>) {
          t["gamma"] = w.f32(p.gamma);
          t["beta"] = w.f32(p.beta);
          j["groups"] = p.groups;
          j["eps"] = p.eps;
        } else if constexpr (std::is_same_v<T, Frn>) {
          t["gamma"] = w.f32(p.gamma);
          t["beta"] = w.f32(p.beta);
          t["tau"] = w.f32(p.tau);
          j["eps"] = p.eps;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          j["size"] = p.size;
          j["stride"] = p.stride;
        } else if constexpr (std::is_same_v<T, ResidualAdd>) {
          j["source"] = p.source;
        } else if constexpr (std::is_same_v<T, Correction>) {
          j["target"] = target_meta(p.target, w);
          j["lambda1"] = p.config.lambda1();
          j["lambda2"] = p.config.lambda2();
          j["n_iter"] = p.config.n_iter();
          j["preserve_zeros"] = p.config.preserve_zeros();
          j["zero_tolerance"] = p.config.zero_tolerance();
        }
      },
      l.op);
  return j;
}

Layer layer_from(const json& j, const PayloadReader& r) {
  Layer l;
  l.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  const json& t = j.at("tensors");
  if (kind == "dense") {
    l.op = Dense{r.tensor(t.at("weight")), r.f32(t.at("bias"))};
  } else if (kind == "conv2d") {
    l.op = Conv2d{r.tensor(t.at("kernel")), r.f32(t.at("bias")), j.at("stride").get<std::size_t>(),
                  parse_padding(j.at("padding").get<std::string>())};
  } else if (kind == "relu") {
    l.op = Relu{};
  } else if (kind == "batchnorm") {
    l.op = BatchNorm{r.f32(t.at("gamma")), r.f32(t.at("beta")), r.f32(t.at("mean")), r.f32(t.at("var")),
                     j.at("eps").get<float>()};
  } else if (kind == "groupnorm") {
    l.op = GroupNorm{j.at("groups").get<std::size_t>(), r.f32(t.at("gamma")), r.f32(t.at("beta")),
                     j.at("eps").get<float>()};
  } else if (kind == "frn") {
    l.op = Frn{r.f32(t.at("gamma")), r.f32(t.at("beta")), r.f32(t.at("tau")), j.at("eps").get<float>()};
  } else if (kind == "maxpool") {
    l.op = MaxPool{j.at("size").get<std::size_t>(), j.at("stride").get<std::size_t>()};
  } else if (kind == "global_avg_pool") {
    l.op = GlobalAvgPool{};
  } else if (kind == "residual_add") {
    l.op = ResidualAdd{j.at("source").get<std::string>()};
  } else if (kind == "flatten") {
    l.op = Flatten{};
  } else if (kind == "correction") {
    CorrectionConfig cfg(j.at("lambda1").get<double>(), j.at("lambda2").get<double>(),
                         j.at("n_iter").get<int>(), j.at("preserve_zeros").get<bool>(),
                         j.at("zero_tolerance").get<double>());
    l.op = Correction{target_from(j.at("target"), r), cfg};
  } else {
    fail(Errc::Malformed, "unknown layer kind '" + kind + "'");
  }
  return l;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::uint8_t d[kDigestSize];
  digest(bytes, {}, d);
  return to_hex(d, kDigestSize);
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> encode_archive(const Archive& a) {
  if (a.metadata.size() > 0xFFFFFFFFu) fail(Errc::InvalidConfig, "archive metadata too large");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + a.metadata.size() + a.payload.size() + kDigestSize);
  const char* magic = magic_for(a.kind);
  out.insert(out.end(), magic, magic + 4);
  put_le(out, a.version);
  put_le(out, static_cast<std::uint16_t>(a.kind));
  put_le(out, static_cast<std::uint32_t>(a.metadata.size()));
  put_le(out, static_cast<std::uint64_t>(a.payload.size()));
  const auto meta = std::span(reinterpret_cast<const std::uint8_t*>(a.metadata.data()), a.metadata.size());
  out.insert(out.end(), meta.begin(), meta.end());
  out.insert(out.end(), a.payload.begin(), a.payload.end());
  std::uint8_t d[kDigestSize];
  digest(meta, a.payload, d);
  out.insert(out.end(), d, d + kDigestSize);
  return out;
}

Archive decode_archive(std::span<const std::uint8_t> bytes, ArchiveKind expected) {
  if (bytes.size() < 4) fail(Errc::Truncated, "archive shorter than its magic");
  if (std::memcmp(bytes.data(), magic_for(expected), 4) != 0) {
    fail(Errc::BadMagic, std::string("expected magic ") + magic_for(expected));
  }
  if (bytes.size() < kHeaderSize) fail(Errc::Truncated, "archive header is incomplete");
  Archive a;
  a.version = get_le<std::uint16_t>(bytes.data() + 4);
  if ((a.version >> 8) > (kArchiveVersion >> 8)) {
    fail(Errc::VersionUnsupported, "archive major version " + std::to_string(a.version >> 8) +
                                       " is newer than " + std::to_string(kArchiveVersion >> 8));
  }
  const auto kind = get_le<std::uint16_t>(bytes.data() + 6);
  if (kind != static_cast<std::uint16_t>(expected)) fail(Errc::Malformed, "archive kind field disagrees with magic");
  a.kind = expected;
  const std::uint64_t meta_len = get_le<std::uint32_t>(bytes.data() + 8);
  const std::uint64_t payload_len = get_le<std::uint64_t>(bytes.data() + 12);
  const std::uint64_t body = bytes.size() - kHeaderSize;
  if (meta_len > body || payload_len > body - meta_len || body - meta_len - payload_len < kDigestSize) {
    fail(Errc::Truncated, "archive declares " + std::to_string(meta_len + payload_len + kDigestSize) +
                              " bytes after the header, file has " + std::to_string(body));
  }
  if (body - meta_len - payload_len > kDigestSize) fail(Errc::Malformed, "trailing bytes after the digest");

  const auto meta = bytes.subspan(kHeaderSize, meta_len);
  const auto payload = bytes.subspan(kHeaderSize + meta_len, payload_len);
  const auto stored = bytes.subspan(kHeaderSize + meta_len + payload_len, kDigestSize);
  std::uint8_t d[kDigestSize];
  digest(meta, payload, d);
  if (std::memcmp(d, stored.data(), kDigestSize) != 0) fail(Errc::ChecksumMismatch, "SHA-256 digest mismatch");

  a.metadata.assign(meta.begin(), meta.end());
  a.payload.assign(payload.begin(), payload.end());
  a.hash = to_hex(d, kDigestSize);
  return a;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(Errc::Io, "error reading " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::Io, "error writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

Archive model_to_archive(const Model& model, const std::string& extra_json) {
  model.validate();
  PayloadWriter w;
  json meta = {{"format", "dwc-model"}, {"input_shape", model.input_shape}};
  json layers = json::array();
  for (const Layer& l : model.layers) layers.push_back(layer_meta(l, w));
  meta["layers"] = std::move(layers);
  meta["info"] = parse_extra(extra_json);
  Archive a;
  a.kind = ArchiveKind::Model;
  a.metadata = meta.dump();
  a.payload = std::move(w.bytes);
  return a;
}

Model model_from_archive(const Archive& a) {
  const json meta = parse_meta(a);
  const PayloadReader r(a.payload);
  Model m = guarded("model metadata", [&] {
    Model out;
    out.input_shape = meta.at("input_shape").get<Shape>();
    for (const json& l : meta.at("layers")) out.layers.push_back(layer_from(l, r));
    return out;
  });
  try {
    m.validate();
  } catch (const Error& e) {
    fail(Errc::Malformed, std::string("stored model is inconsistent: ") + e.what());
  }
  return m;
}

std::string save_model(const std::filesystem::path& path, const Model& model, const std::string& extra_json) {
  return save_archive(path, model_to_archive(model, extra_json));
}

Model load_model(const std::filesystem::path& path, std::string* metadata_json, std::string* hash) {
  const Archive a = load_archive(path, ArchiveKind::Model);
  Model m = model_from_archive(a);
  if (metadata_json) *metadata_json = a.metadata;
  if (hash) *hash = a.hash;
  return m;
}

std::string save_targets(const std::filesystem::path& path,
                         const std::map<std::string, TargetDistribution>& targets,
                         const std::string& extra_json) {
  PayloadWriter w;
  json list = json::array();
  for (const auto& [name, t] : targets) {
    if (name != t.layer_id) fail(Errc::InvalidConfig, "target key '" + name + "' differs from its layer_id");
    t.validate();
    list.push_back(target_meta(t, w));
  }
  json meta = {{"format", "dwc-targets"}, {"targets", std::move(list)}, {"info", parse_extra(extra_json)}};
  Archive a;
  a.kind = ArchiveKind::Targets;
  a.metadata = meta.dump();
  a.payload = std::move(w.bytes);
  return save_archive(path, std::move(a));
}

std::map<std::string, TargetDistribution> load_targets(const std::filesystem::path& path,
                                                       std::string* metadata_json, std::string* hash) {
  const Archive a = load_archive(path, ArchiveKind::Targets);
  const json meta = parse_meta(a);
  const PayloadReader r(a.payload);
  auto out = guarded("targets metadata", [&] {
    std::map<std::string, TargetDistribution> m;
    for (const json& j : meta.at("targets")) {
      auto t = target_from(j, r);
      const std::string key = t.layer_id;
      if (!m.emplace(key, std::move(t)).second) fail(Errc::Malformed, "duplicate target '" + key + "'");
    }
    return m;
  });
  for (const auto& [_, t] : out) t.validate();
  if (metadata_json) *metadata_json = a.metadata;
  if (hash) *hash = a.hash;
  return out;
}

std::string save_dataset(const std::filesystem::path& path, const Dataset& data, const std::string& extra_json) {
  data.validate();
  std::vector<std::uint8_t> pixels(data.images.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::lround(data.images.data[i] * 255.0f));
  }
  PayloadWriter w;
  json meta = {{"format", "dwc-dataset"},
               {"name", data.name},
               {"count", data.size()},
               {"shape", data.sample_shape()},
               {"classes", data.classes},
               {"pixel_denominator", 255},
               {"info", parse_extra(extra_json)}};
  meta["pixels"] = w.u8(pixels);
  meta["labels"] = w.i32(data.labels);
  Archive a;
  a.kind = ArchiveKind::Dataset;
  a.metadata = meta.dump();
  a.payload = std::move(w.bytes);
  return save_archive(path, std::move(a));
}

Dataset load_dataset(const std::filesystem::path& path, std::string* metadata_json, std::string* hash) {
  const Archive a = load_archive(path, ArchiveKind::Dataset);
  const json meta = parse_meta(a);
  const PayloadReader r(a.payload);
  Dataset d = guarded("dataset metadata", [&] {
    Dataset out;
    out.name = meta.at("name").get<std::string>();
    out.classes = meta.at("classes").get<int>();
    const auto count = meta.at("count").get<std::size_t>();
    Shape shape{count};
    for (const auto s : meta.at("shape").get<Shape>()) shape.push_back(s);
    const auto denom = static_cast<float>(meta.at("pixel_denominator").get<int>());
    const auto px = r.u8(meta.at("pixels"));
    if (px.size() != shape_product(shape)) fail(Errc::Malformed, "pixel count differs from shape");
    std::vector<float> values(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) values[i] = static_cast<float>(px[i]) / denom;
    out.images = Tensor(std::move(shape), std::move(values));
    out.labels = r.i32(meta.at("labels"));
    return out;
  });
  d.validate();
  if (metadata_json) *metadata_json = a.metadata;
  if (hash) *hash = a.hash;
  return d;
}

std::string archive_hash(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 4) fail(Errc::Truncated, path.string() + ": too short");
  for (const auto kind : {ArchiveKind::Model, ArchiveKind::Targets, ArchiveKind::Dataset}) {
    if (std::memcmp(bytes.data(), magic_for(kind), 4) == 0) return decode_archive(bytes, kind).hash;
  }
  fail(Errc::BadMagic, path.string() + ": not a dwc archive");
}

Dataset read_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (img.size() < 4 || lab.size() < 4) fail(Errc::Truncated, "IDX file shorter than its magic");
  if (get_be32(img.data()) != 0x00000803u) fail(Errc::BadMagic, images_path.string() + ": not an IDX image file");
  if (get_be32(lab.data()) != 0x00000801u) fail(Errc::BadMagic, labels_path.string() + ": not an IDX label file");
  if (img.size() < 16) fail(Errc::Truncated, images_path.string() + ": header incomplete");
  if (lab.size() < 8) fail(Errc::Truncated, labels_path.string() + ": header incomplete");
  const std::size_t count = get_be32(img.data() + 4);
  const std::size_t rows = get_be32(img.data() + 8);
  const std::size_t cols = get_be32(img.data() + 12);
  const std::size_t label_count = get_be32(lab.data() + 4);
  if (count != label_count) {
    fail(Errc::CountMismatch, std::to_string(count) + " images but " + std::to_string(label_count) + " labels");
  }
  const std::size_t pixels = count * rows * cols;
  if (img.size() - 16 < pixels) fail(Errc::Truncated, images_path.string() + ": pixel data incomplete");
  if (lab.size() - 8 < count) fail(Errc::Truncated, labels_path.string() + ": label data incomplete");

  Dataset d;
  d.name = "idx";
  d.images = Tensor({count, rows, cols, 1});
  for (std::size_t i = 0; i < pixels; ++i) d.images.data[i] = static_cast<float>(img[16 + i]) / 255.0f;
  d.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = std::max(10, max_label + 1);
  return d;
}

}  // namespace dwc
