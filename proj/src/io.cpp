// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dlka/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace dlka {

// ---------------------------------------------------------------------------
// Config

DataConfig DataConfig::defaults(int rank) {
  DataConfig d;
  if (rank == 2) {
    d.count = 128;
    d.dims = {64, 64};
  }
  return d;
}

Config Config::defaults(int rank) {
  return {NetConfig::defaults(rank), TrainConfig::defaults(rank), DataConfig::defaults(rank)};
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) {
    throw FormatError("config: '" + std::string(key) + "' expects a number, got '" +
                      std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("config: '" + std::string(key) + "' expects true/false, got '" +
                    std::string(v) + "'");
}

Shape parse_dims(std::string_view key, std::string_view v) {
  Shape out;
  while (true) {
    const auto comma = v.find_first_of(",x");
    out.push_back(parse_number<Index>(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v = v.substr(comma + 1);
  }
  return out;
}

std::string fmt_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

using Setter = std::function<void(Config&, std::string_view key, std::string_view v)>;

template <typename T>
Setter index_field(T Config::*member, Index T::*field) {
  return [=](Config& c, std::string_view k, std::string_view v) {
    (c.*member).*field = parse_number<Index>(k, v);
  };
}

Setter lka_index(Index LkaSpec::*field) {
  return [=](Config& c, std::string_view k, std::string_view v) {
    c.net.lka.*field = parse_number<Index>(k, v);
  };
}

Setter lka_bool(bool LkaSpec::*field) {
  return [=](Config& c, std::string_view k, std::string_view v) {
    c.net.lka.*field = parse_bool(k, v);
  };
}

Setter train_real(real TrainConfig::*field) {
  return [=](Config& c, std::string_view k, std::string_view v) {
    c.train.*field = static_cast<real>(parse_number<double>(k, v));
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> m;
    m["net.rank"] = [](Config&, std::string_view, std::string_view) {};
    m["net.in_channels"] = index_field(&Config::net, &NetConfig::in_channels);
    m["net.num_classes"] = index_field(&Config::net, &NetConfig::num_classes);
    m["net.base_channels"] = index_field(&Config::net, &NetConfig::base_channels);
    m["net.encoder_blocks"] = index_field(&Config::net, &NetConfig::encoder_blocks);
    m["net.decoder_blocks"] = index_field(&Config::net, &NetConfig::decoder_blocks);
    m["net.bottleneck_blocks"] = index_field(&Config::net, &NetConfig::bottleneck_blocks);
    m["net.skip_count"] = index_field(&Config::net, &NetConfig::skip_count);
    m["lka.K"] = lka_index(&LkaSpec::K);
    m["lka.d"] = lka_index(&LkaSpec::d);
    m["lka.deformable"] = lka_bool(&LkaSpec::deformable);
    m["lka.deform3d_kernel"] = lka_index(&LkaSpec::deform3d_kernel);
    m["lka.rigid3d_layer"] = lka_bool(&LkaSpec::rigid3d_layer);
    m["lka.decomposition_bias"] = lka_bool(&LkaSpec::decomposition_bias);
    m["lka.activation"] = [](Config& c, std::string_view k, std::string_view v) {
      if (v == "gelu") {
        c.net.lka.activation = Activation::kGelu;
      } else if (v == "identity") {
        c.net.lka.activation = Activation::kIdentity;
      } else {
        throw FormatError("config: '" + std::string(k) + "' expects gelu or identity");
      }
    };
    m["train.epochs"] = index_field(&Config::train, &TrainConfig::epochs);
    m["train.batch"] = index_field(&Config::train, &TrainConfig::batch);
    m["train.lr"] = train_real(&TrainConfig::lr);
    m["train.momentum"] = train_real(&TrainConfig::momentum);
    m["train.weight_decay"] = train_real(&TrainConfig::weight_decay);
    m["train.val_fraction"] = train_real(&TrainConfig::val_fraction);
    m["train.seed"] = [](Config& c, std::string_view k, std::string_view v) {
      c.train.seed = parse_number<std::uint64_t>(k, v);
    };
    m["train.target_dice"] = [](Config& c, std::string_view k, std::string_view v) {
      if (v == "none") {
        c.train.target_dice.reset();
      } else {
        c.train.target_dice = parse_number<double>(k, v);
      }
    };
    m["train.hd95"] = [](Config& c, std::string_view k, std::string_view v) {
      c.train.hd95 = parse_bool(k, v);
    };
    m["data.count"] = index_field(&Config::data, &DataConfig::count);
    m["data.dims"] = [](Config& c, std::string_view k, std::string_view v) {
      c.data.dims = parse_dims(k, v);
    };
    return m;
  }();
  return table;
}

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<Entry> tokenize(std::string_view text) {
  std::vector<Entry> out;
  std::string section;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw FormatError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError(where + "expected key=value");
    std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw FormatError(where + "empty key");
    if (value.empty()) throw FormatError(where + "missing value for '" + key + "'");
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    out.push_back({std::move(key), value, line_no});
  }
  return out;
}

}  // namespace

Config config_parse(std::string_view text, const std::vector<std::string>& overrides) {
  std::vector<Entry> entries = tokenize(text);
  std::set<std::string> overridden;
  for (const std::string& o : overrides) {
    std::vector<Entry> one = tokenize(o);
    if (one.size() != 1 || o.find('\n') != std::string::npos) {
      throw FormatError("config override '" + o + "' must be one key=value");
    }
    if (!overridden.insert(one[0].key).second) {
      throw FormatError("config override '" + one[0].key + "' given twice");
    }
    std::erase_if(entries, [&](const Entry& e) { return e.key == one[0].key; });
    one[0].line = 0;
    entries.push_back(std::move(one[0]));
  }
  std::set<std::string> seen;
  int rank = 3;
  for (const Entry& e : entries) {
    if (!setters().contains(e.key)) {
      throw FormatError("config line " + std::to_string(e.line) + ": unknown key '" +
                        e.key + "'");
    }
    if (!seen.insert(e.key).second) {
      throw FormatError("config line " + std::to_string(e.line) + ": duplicate key '" +
                        e.key + "'");
    }
    if (e.key == "net.rank") {
      rank = parse_number<int>(e.key, e.value);
      if (rank != 2 && rank != 3) throw FormatError("config: net.rank must be 2 or 3");
    }
  }
  Config c = Config::defaults(rank);
  for (const Entry& e : entries) setters().at(e.key)(c, e.key, e.value);
  c.net.validate();
  if (static_cast<int>(c.data.dims.size()) != rank) {
    throw FormatError("config: data.dims needs " + std::to_string(rank) + " extents");
  }
  if (c.data.count < 0) throw FormatError("config: data.count must be >= 0");
  return c;
}

std::string config_format(const Config& c) {
  std::ostringstream os;
  const NetConfig& n = c.net;
  const LkaSpec& l = n.lka;
  const TrainConfig& t = c.train;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "[net]\n"
     << "rank = " << n.rank << "\n"
     << "in_channels = " << n.in_channels << "\n"
     << "num_classes = " << n.num_classes << "\n"
     << "base_channels = " << n.base_channels << "\n"
     << "encoder_blocks = " << n.encoder_blocks << "\n"
     << "decoder_blocks = " << n.decoder_blocks << "\n"
     << "bottleneck_blocks = " << n.bottleneck_blocks << "\n"
     << "skip_count = " << n.skip_count << "\n\n"
     << "[lka]\n"
     << "K = " << l.K << "\n"
     << "d = " << l.d << "\n"
     << "deformable = " << b(l.deformable) << "\n"
     << "deform3d_kernel = " << l.deform3d_kernel << "\n"
     << "rigid3d_layer = " << b(l.rigid3d_layer) << "\n"
     << "decomposition_bias = " << b(l.decomposition_bias) << "\n"
     << "activation = " << (l.activation == Activation::kGelu ? "gelu" : "identity")
     << "\n\n"
     << "[train]\n"
     << "epochs = " << t.epochs << "\n"
     << "batch = " << t.batch << "\n"
     << "lr = " << fmt_real(t.lr) << "\n"
     << "momentum = " << fmt_real(t.momentum) << "\n"
     << "weight_decay = " << fmt_real(t.weight_decay) << "\n"
     << "seed = " << t.seed << "\n"
     << "val_fraction = " << fmt_real(t.val_fraction) << "\n"
     << "target_dice = " << (t.target_dice ? fmt_real(*t.target_dice) : "none") << "\n"
     << "hd95 = " << b(t.hd95) << "\n\n"
     << "[data]\n"
     << "count = " << c.data.count << "\n"
     << "dims = ";
  for (size_t i = 0; i < c.data.dims.size(); ++i) {
    os << (i ? "," : "") << c.data.dims[i];
  }
  os << "\n";
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for '" + path + "'");
}

Config config_load(const std::string& path, const std::vector<std::string>& overrides) {
  return config_parse(read_file(path), overrides);
}

// ---------------------------------------------------------------------------
// Binary helpers

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    using U = std::make_unsigned_t<std::conditional_t<std::is_integral_v<T>, T,
        std::conditional_t<sizeof(T) == 8, std::int64_t, std::int32_t>>>;
    U u = std::bit_cast<U>(v);
    for (size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>(u & 0xff));
      u = static_cast<U>(u >> 8);
    }
  }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string take() { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string what) : d_(data), what_(std::move(what)) {}

  template <typename T>
  T get() {
    using U = std::make_unsigned_t<std::conditional_t<std::is_integral_v<T>, T,
        std::conditional_t<sizeof(T) == 8, std::int64_t, std::int32_t>>>;
    need(sizeof(T));
    U u = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      u = static_cast<U>(u | (static_cast<U>(static_cast<unsigned char>(d_[pos_ + i]))
                              << (8 * i)));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(u);
  }
  std::string_view bytes(size_t n) {
    need(n);
    auto s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return d_.size() - pos_; }
  void need(size_t n) const {
    if (remaining() < n) throw FormatError(what_ + ": truncated");
  }

 private:
  std::string_view d_;
  std::string what_;
  size_t pos_ = 0;
};

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 40;

// Element count for dims read from a file, rejecting overflow.
std::uint64_t checked_numel(const Shape& dims, const std::string& what) {
  std::uint64_t n = 1;
  for (Index d : dims) {
    if (d != 0 && n > kMaxElements / static_cast<std::uint64_t>(d)) {
      throw FormatError(what + ": dims overflow");
    }
    n *= static_cast<std::uint64_t>(d);
  }
  return n;
}

DType read_dtype(std::uint8_t code, const std::string& what) {
  if (code > 2) throw FormatError(what + ": unknown dtype " + std::to_string(code));
  return static_cast<DType>(code);
}

constexpr DType kRealDType = sizeof(real) == 4 ? DType::kF32 : DType::kF64;

}  // namespace

Index dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Raster

std::string raster_encode(const Raster& r) {
  const Index n = shape_numel(r.dims);
  const Index have = r.dtype == DType::kU8 ? static_cast<Index>(r.labels.size())
                                           : static_cast<Index>(r.values.size());
  if (have != n) throw ShapeError("raster: payload does not match dims");
  if (r.dims.size() > 255) throw ShapeError("raster: rank too large");
  Writer w;
  w.bytes("DLKV");
  w.put<std::uint16_t>(kRasterVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(r.dtype));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(r.dims.size()));
  for (Index d : r.dims) {
    if (d < 0 || d > std::numeric_limits<std::uint32_t>::max()) {
      throw ShapeError("raster: dim out of range");
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  switch (r.dtype) {
    case DType::kF32:
      for (double v : r.values) w.put<float>(static_cast<float>(v));
      break;
    case DType::kF64:
      for (double v : r.values) w.put<double>(v);
      break;
    case DType::kU8:
      w.bytes({reinterpret_cast<const char*>(r.labels.data()), r.labels.size()});
      break;
  }
  return w.take();
}

Raster raster_decode(std::string_view bytes) {
  const std::string what = "raster";
  Reader rd(bytes, what);
  if (rd.bytes(4) != "DLKV") throw FormatError("raster: bad magic");
  const auto version = rd.get<std::uint16_t>();
  if (version != kRasterVersion) {
    throw FormatError("raster: unsupported version " + std::to_string(version));
  }
  Raster r;
  r.dtype = read_dtype(rd.get<std::uint8_t>(), what);
  const auto rank = rd.get<std::uint8_t>();
  for (int i = 0; i < rank; ++i) r.dims.push_back(rd.get<std::uint32_t>());
  const std::uint64_t n = checked_numel(r.dims, what);
  const std::uint64_t len = n * static_cast<std::uint64_t>(dtype_size(r.dtype));
  if (rd.remaining() < len) throw FormatError("raster: truncated payload");
  if (rd.remaining() > len) throw FormatError("raster: trailing bytes after payload");
  switch (r.dtype) {
    case DType::kF32:
      r.values.resize(n);
      for (auto& v : r.values) v = rd.get<float>();
      break;
    case DType::kF64:
      r.values.resize(n);
      for (auto& v : r.values) v = rd.get<double>();
      break;
    case DType::kU8: {
      const auto s = rd.bytes(n);
      r.labels.assign(s.begin(), s.end());
      break;
    }
  }
  return r;
}

Raster raster_from_tensor(const Tensor& t, DType dtype) {
  if (dtype == DType::kU8) throw ValidationError("raster: tensors need f32 or f64");
  Raster r;
  r.dtype = dtype;
  r.dims = t.shape();
  r.values.assign(t.data().begin(), t.data().end());
  return r;
}

Raster raster_from_labels(const LabelMap& labels) {
  Raster r;
  r.dtype = DType::kU8;
  r.dims = labels.shape;
  if (r.dims.empty()) throw ShapeError("raster: label map without batch axis");
  r.dims.insert(r.dims.begin() + 1, 1);
  r.labels = labels.data;
  return r;
}

Tensor raster_to_tensor(const Raster& r) {
  if (r.dtype == DType::kU8) {
    std::vector<real> v(r.labels.begin(), r.labels.end());
    return Tensor(r.dims, std::move(v));
  }
  std::vector<real> v(r.values.begin(), r.values.end());
  return Tensor(r.dims, std::move(v));
}

LabelMap raster_to_labels(const Raster& r) {
  if (r.dtype != DType::kU8) throw ValidationError("raster: expected u8 labels");
  if (r.dims.size() < 2 || r.dims[1] != 1) {
    throw ShapeError("raster: labels need dims (N, 1, spatial...)");
  }
  LabelMap m;
  m.shape = r.dims;
  m.shape.erase(m.shape.begin() + 1);
  m.data = r.labels;
  return m;
}

void raster_write(const std::string& path, const Raster& r) {
  write_file(path, raster_encode(r));
}

Raster raster_read(const std::string& path) { return raster_decode(read_file(path)); }

// ---------------------------------------------------------------------------
// Checkpoint

std::string checkpoint_encode(const Checkpoint& ck) {
  Writer w;
  w.bytes("DLKC");
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint64_t>(ck.seed);
  w.put<std::uint64_t>(ck.epoch);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.config_text.size()));
  w.bytes(ck.config_text);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.tensors.size()));
  std::uint64_t offset = 0;
  const auto esize = static_cast<std::uint64_t>(dtype_size(kRealDType));
  for (const auto& [name, t] : ck.tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("checkpoint: tensor name too long");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(kRealDType));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (Index d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    const std::uint64_t len = static_cast<std::uint64_t>(t.numel()) * esize;
    w.put<std::uint64_t>(offset);
    w.put<std::uint64_t>(len);
    offset += len;
  }
  for (const auto& entry : ck.tensors) {
    for (real v : entry.second.data()) w.put<real>(v);
  }
  return w.take();
}

Checkpoint checkpoint_decode(std::string_view bytes) {
  const std::string what = "checkpoint";
  Reader rd(bytes, what);
  if (rd.bytes(4) != "DLKC") throw FormatError("checkpoint: bad magic");
  const auto version = rd.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.seed = rd.get<std::uint64_t>();
  ck.epoch = rd.get<std::uint64_t>();
  ck.config_text = std::string(rd.bytes(rd.get<std::uint32_t>()));
  const auto count = rd.get<std::uint32_t>();
  struct Dir {
    std::string name;
    DType dtype;
    Shape dims;
    std::uint64_t offset, length;
  };
  std::vector<Dir> dir;
  std::set<std::string> names;
  std::uint64_t expect = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Dir e;
    e.name = std::string(rd.bytes(rd.get<std::uint16_t>()));
    if (!names.insert(e.name).second) {
      throw FormatError("checkpoint: duplicate tensor '" + e.name + "'");
    }
    e.dtype = read_dtype(rd.get<std::uint8_t>(), what);
    if (e.dtype == DType::kU8) throw FormatError("checkpoint: u8 tensor '" + e.name + "'");
    const auto rank = rd.get<std::uint8_t>();
    for (int k = 0; k < rank; ++k) e.dims.push_back(rd.get<std::uint32_t>());
    e.offset = rd.get<std::uint64_t>();
    e.length = rd.get<std::uint64_t>();
    const std::uint64_t n = checked_numel(e.dims, what);
    if (e.length != n * static_cast<std::uint64_t>(dtype_size(e.dtype))) {
      throw FormatError("checkpoint: length mismatch for '" + e.name + "'");
    }
    if (e.offset != expect) throw FormatError("checkpoint: bad offset for '" + e.name + "'");
    expect += e.length;
    dir.push_back(std::move(e));
  }
  if (rd.remaining() < expect) throw FormatError("checkpoint: truncated payload");
  if (rd.remaining() > expect) throw FormatError("checkpoint: trailing bytes after payload");
  for (const Dir& e : dir) {
    Tensor t(e.dims);
    for (Index i = 0; i < t.numel(); ++i) {
      t[i] = e.dtype == DType::kF32 ? static_cast<real>(rd.get<float>())
                                    : static_cast<real>(rd.get<double>());
    }
    ck.tensors.emplace_back(e.name, std::move(t));
  }
  return ck;
}

void checkpoint_save(const std::string& path, const Checkpoint& ck) {
  write_file(path, checkpoint_encode(ck));
}

Checkpoint checkpoint_load(const std::string& path) {
  return checkpoint_decode(read_file(path));
}

Checkpoint checkpoint_from_state(const TrainState& state, const DataConfig& data) {
  Checkpoint ck;
  ck.seed = state.train.seed;
  ck.epoch = static_cast<std::uint64_t>(state.epoch);
  Config c{state.net, state.train, data};
  c.train.lr = state.optim.lr;
  c.train.momentum = state.optim.momentum;
  c.train.weight_decay = state.optim.weight_decay;
  ck.config_text = config_format(c);
  for (const std::string& n : state.params.names()) {
    ck.tensors.emplace_back("param/" + n, state.params.get(n).value());
  }
  for (const auto& [n, v] : state.optim.velocity) ck.tensors.emplace_back("momentum/" + n, v);
  return ck;
}

TrainState state_from_checkpoint(const Checkpoint& ck, DataConfig* data) {
  const Config c = config_parse(ck.config_text);
  if (c.train.seed != ck.seed) throw FormatError("checkpoint: seed differs from config");
  TrainState s = train_init(c.net, c.train);
  s.epoch = static_cast<Index>(ck.epoch);
  std::set<std::string> loaded;
  for (const auto& [name, t] : ck.tensors) {
    if (name.starts_with("param/")) {
      const std::string p = name.substr(6);
      s.params.assign(p, t);
      loaded.insert(p);
    } else if (name.starts_with("momentum/")) {
      const std::string p = name.substr(9);
      if (!s.params.contains(p) || s.params.get(p).shape() != t.shape()) {
        throw FormatError("checkpoint: momentum for unknown parameter '" + p + "'");
      }
      s.optim.velocity[p] = t;
    } else {
      throw FormatError("checkpoint: unexpected tensor '" + name + "'");
    }
  }
  for (const std::string& n : s.params.names()) {
    if (!loaded.contains(n)) throw FormatError("checkpoint: missing parameter '" + n + "'");
  }
  if (data) *data = c.data;
  return s;
}

}  // namespace dlka
