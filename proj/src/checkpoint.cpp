// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dkp/error.hpp"

namespace dkp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out_.append(b, sizeof(T));
  }
  void u8(std::uint8_t v) { pod(v); }
  void u32(std::uint32_t v) { pod(v); }
  void u64(std::uint64_t v) { pod(v); }
  void f64(double v) { pod(v); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void doubles(std::span<const double> v) {
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  void matrix(const DenseMatrix& m) {
    u64(m.rows());
    u64(m.cols());
    doubles(m.flat());
  }
  void vec(const Vector& v) {
    u64(v.size());
    doubles(v);
  }
  void section(const char tag[4], const std::string& payload) {
    out_.append(tag, 4);
    u64(payload.size());
    out_ += payload;
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const char* p, std::size_t n, std::string what)
      : p_(p), end_(p + n), what_(std::move(what)) {}

  const char* take(std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n)
      throw FormatError("checkpoint: truncated " + what_);
    const char* r = p_;
    p_ += n;
    return r;
  }
  template <typename T>
  T pod() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::uint8_t u8() { return pod<std::uint8_t>(); }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  std::size_t size(std::size_t elem = 1) {
    const std::uint64_t n = u64();
    if (n > static_cast<std::uint64_t>(end_ - p_) / elem)
      throw FormatError("checkpoint: length field exceeds " + what_ + " size");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = size();
    return std::string(take(n), n);
  }
  void doubles(std::span<double> v) {
    std::memcpy(v.data(), take(v.size() * sizeof(double)), v.size() * sizeof(double));
  }
  DenseMatrix matrix() {
    const std::uint64_t r = u64(), c = u64();
    if (c != 0 && r > static_cast<std::uint64_t>(end_ - p_) / sizeof(double) / c)
      throw FormatError("checkpoint: matrix shape exceeds " + what_ + " size");
    DenseMatrix m(r, c);
    doubles(m.flat());
    return m;
  }
  Vector vec() {
    Vector v(size(sizeof(double)));
    doubles(v);
    return v;
  }
  bool done() const { return p_ == end_; }
  void expect_done() const {
    if (!done()) throw FormatError("checkpoint: trailing bytes in " + what_);
  }

 private:
  const char* p_;
  const char* end_;
  std::string what_;
};

void write_doped(Writer& w, const DopedWeight& d) {
  w.u8(static_cast<std::uint8_t>(d.kind()));
  w.u64(d.rows());
  w.u64(d.cols());
  for_each_factor(d.structured, [&](const DenseMatrix& f) { w.matrix(f); });
  w.u64(d.nnz_target);
  // Packed mask bitmap, then alive values in row-major order.
  const PruneMask& m = d.mask();
  for (std::size_t i = 0; i < m.size(); i += 8) {
    std::uint8_t byte = 0;
    for (std::size_t k = 0; k < 8 && i + k < m.size(); ++k)
      if (m.alive_flat(i + k)) byte |= static_cast<std::uint8_t>(1u << k);
    w.u8(byte);
  }
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.alive_flat(i)) w.f64(d.ws.data()[i]);
  w.f64(d.alpha);
  w.f64(d.beta);
  w.u8(d.frozen() ? 1 : 0);
}

DopedWeight read_doped(Reader& r) {
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(VariantKind::kHmd))
    throw FormatError("checkpoint: unknown structured variant " + std::to_string(kind));
  const std::uint64_t rows = r.u64(), cols = r.u64();
  if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
    throw FormatError("checkpoint: implausible doped weight shape");
  StructuredTerm st;
  switch (static_cast<VariantKind>(kind)) {
    case VariantKind::kNone: st = NoStructure{rows, cols}; break;
    case VariantKind::kKp: st = KroneckerPair{r.matrix(), r.matrix()}; break;
    case VariantKind::kLmf: st = LowRankPair{r.matrix(), r.matrix()}; break;
    case VariantKind::kHmd: {
      HybridParts h;
      h.d = r.matrix();
      h.u = r.matrix();
      h.v = r.matrix();
      st = std::move(h);
      break;
    }
  }
  if (rows_of(st) != rows || cols_of(st) != cols)
    throw FormatError("checkpoint: structured factors do not match layer shape");
  const std::uint64_t nnz_target = r.u64();
  PruneMask mask(rows, cols, true);
  const std::size_t total = rows * cols;
  const char* bits = r.take((total + 7) / 8);
  for (std::size_t i = 0; i < total; ++i)
    if (!((static_cast<std::uint8_t>(bits[i / 8]) >> (i % 8)) & 1u)) mask.kill_flat(i);
  DenseMatrix ws(rows, cols);
  for (std::size_t i = 0; i < total; ++i)
    if (mask.alive_flat(i)) ws.data()[i] = r.f64();
  DopedWeight d(std::move(st), std::move(ws), std::move(mask));
  d.nnz_target = nnz_target;
  d.alpha = r.f64();
  d.beta = r.f64();
  if (r.u8()) d.freeze();
  return d;
}

}  // namespace

std::string serialize_checkpoint(const TrainState& st) {
  Writer conf, vocab, model, stat;
  conf.bytes() = to_json(st.config);

  vocab.u64(st.vocab.size());
  for (const auto& t : st.vocab.tokens()) vocab.str(t);

  const LanguageModel& m = st.model;
  model.matrix(m.embedding);
  model.u64(m.layers.size());
  for (const auto& l : m.layers) {
    write_doped(model, l.w);
    model.vec(l.bias);
  }
  model.matrix(m.out_w);
  model.vec(m.out_b);

  stat.pod<std::int64_t>(st.step);
  stat.pod<std::int64_t>(st.epoch);
  stat.str(st.rng.state());
  stat.u64(st.log.size());
  for (const auto& e : st.log) {
    stat.pod<std::int64_t>(e.epoch);
    for (double v : {e.train_ppl, e.valid_ppl, e.sparsity, e.cmr_p, e.lr, e.wall_secs})
      stat.f64(v);
  }

  Writer out;
  out.bytes() = "DKPT";
  out.u32(kCheckpointVersion);
  out.section("CONF", conf.bytes());
  out.section("VOCB", vocab.bytes());
  out.section("MODL", model.bytes());
  out.section("STAT", stat.bytes());
  return std::move(out.bytes());
}

TrainState deserialize_checkpoint(const std::string& bytes) {
  Reader top(bytes.data(), bytes.size(), "header");
  if (std::string(top.take(4), 4) != "DKPT")
    throw FormatError("checkpoint: bad magic (not a DKPT file)");
  const std::uint32_t version = top.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");

  TrainState st;
  bool have[4] = {false, false, false, false};
  const char* tags[4] = {"CONF", "VOCB", "MODL", "STAT"};
  while (!top.done()) {
    const std::string tag(top.take(4), 4);
    const std::size_t len = top.size();
    Reader r(top.take(len), len, tag + " section");
    int which = -1;
    for (int k = 0; k < 4; ++k)
      if (tag == tags[k]) which = k;
    if (which < 0) throw FormatError("checkpoint: unknown section '" + tag + "'");
    if (have[which]) throw FormatError("checkpoint: duplicate section '" + tag + "'");
    have[which] = true;
    switch (which) {
      case 0:
        try {
          st.config = config_from_json(std::string(r.take(len), len));
        } catch (const ConfigError& e) {
          throw FormatError(std::string("checkpoint: bad config: ") + e.what());
        }
        break;
      case 1: {
        const std::size_t n = r.size(sizeof(std::uint64_t));
        std::vector<std::string> tokens;
        for (std::size_t i = 0; i < n; ++i) tokens.push_back(r.str());
        st.vocab = Vocab(std::move(tokens));
        break;
      }
      case 2: {
        LanguageModel& m = st.model;
        m.embedding = r.matrix();
        const std::size_t nl = r.size();
        for (std::size_t i = 0; i < nl; ++i) {
          LstmLayer l;
          l.w = read_doped(r);
          l.bias = r.vec();
          m.layers.push_back(std::move(l));
        }
        m.out_w = r.matrix();
        m.out_b = r.vec();
        break;
      }
      case 3: {
        st.step = r.pod<std::int64_t>();
        st.epoch = r.pod<std::int64_t>();
        st.rng.set_state(r.str());
        const std::size_t n = r.size();
        for (std::size_t i = 0; i < n; ++i) {
          EpochLog e;
          e.epoch = r.pod<std::int64_t>();
          for (double* v : {&e.train_ppl, &e.valid_ppl, &e.sparsity, &e.cmr_p,
                            &e.lr, &e.wall_secs})
            *v = r.f64();
          st.log.push_back(e);
        }
        break;
      }
    }
    r.expect_done();
  }
  for (int k = 0; k < 4; ++k)
    if (!have[k]) throw FormatError(std::string("checkpoint: missing section ") + tags[k]);

  const LanguageModel& m = st.model;
  bool ok = m.layers.size() == st.config.layers &&
            m.embedding.rows() == st.vocab.size() &&
            m.out_w.rows() == st.vocab.size() && m.out_b.size() == st.vocab.size() &&
            m.embedding.cols() == st.config.embed_size &&
            m.out_w.cols() == st.config.hidden_size;
  for (std::size_t l = 0; ok && l < m.layers.size(); ++l) {
    const LstmLayer& layer = m.layers[l];
    const std::size_t in = l == 0 ? st.config.embed_size : st.config.hidden_size;
    ok = layer.bias.size() == 4 * st.config.hidden_size &&
         layer.w.rows() == layer.bias.size() &&
         layer.w.cols() == in + st.config.hidden_size;
  }
  if (!ok) throw FormatError("checkpoint: model shapes disagree with its config");
  return st;
}

void save_checkpoint(const TrainState& st, const std::string& path) {
  const std::string bytes = serialize_checkpoint(st);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("cannot write checkpoint " + path);
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace dkp
