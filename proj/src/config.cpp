// Copyright 2026 The dkp Authors. Apache 2.0 License.

#include "dkp/config.hpp"

#include <json.hpp>
#include <set>

#include "dkp/error.hpp"

namespace dkp {

using nlohmann::ordered_json;

namespace {

void check(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ConfigError("config." + field + ": " + msg);
}

void validate_variant(const VariantConfig& v, const std::string& f) {
  check(v.target_cf > 0.0, f + ".target_cf", "must be positive");
  check(v.structured_cf >= 0.0, f + ".structured_cf", "must be >= 0");
  if (v.kp_shape) {
    const KronShape& s = *v.kp_shape;
    check(s.m1 && s.n1 && s.m2 && s.n2, f + ".kp_shape", "dims must be positive");
  }
}

// Reads fields out of one JSON object and rejects anything left unread.
class Fields {
 public:
  Fields(const ordered_json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where("") + "expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where(k) + "unknown key");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where(key) + "wrong type (got " +
                        std::string(it->type_name()) + ")");
    }
  }
  const ordered_json* sub(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string where(const std::string& key) const {
    return "config" + path_ + (key.empty() ? "" : "." + key) + ": ";
  }
  std::string path(const std::string& key) const { return path_ + "." + key; }

 private:
  const ordered_json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ordered_json variant_json(const VariantConfig& v) {
  ordered_json j;
  j["kind"] = to_string(v.kind);
  if (v.kp_shape)
    j["kp_shape"] = {v.kp_shape->m1, v.kp_shape->n1, v.kp_shape->m2,
                     v.kp_shape->n2};
  else
    j["kp_shape"] = nullptr;
  j["lmf_rank"] = v.lmf_rank;
  j["hmd_m1"] = v.hmd_m1;
  j["hmd_rank"] = v.hmd_rank;
  j["structured_cf"] = v.structured_cf;
  j["doping"] = v.doping;
  j["target_cf"] = v.target_cf;
  return j;
}

VariantConfig variant_from(const ordered_json& j, const std::string& path) {
  VariantConfig v;
  Fields f(j, path);
  std::string kind = to_string(v.kind);
  f.get("kind", kind);
  try {
    v.kind = variant_from_string(kind);
  } catch (const std::exception& e) {
    throw ConfigError(f.where("kind") + e.what());
  }
  if (const auto* shape = f.sub("kp_shape"); shape && !shape->is_null()) {
    if (!shape->is_array() || shape->size() != 4)
      throw ConfigError(f.where("kp_shape") + "expected [m1, n1, m2, n2]");
    for (const auto& d : *shape)
      if (!d.is_number_unsigned())
        throw ConfigError(f.where("kp_shape") + "dims must be unsigned integers");
    v.kp_shape = KronShape{(*shape)[0], (*shape)[1], (*shape)[2], (*shape)[3]};
  }
  f.get("lmf_rank", v.lmf_rank);
  f.get("hmd_m1", v.hmd_m1);
  f.get("hmd_rank", v.hmd_rank);
  f.get("structured_cf", v.structured_cf);
  f.get("doping", v.doping);
  f.get("target_cf", v.target_cf);
  return v;
}

}  // namespace

void TrainConfig::validate() const {
  check(vocab_size >= 2, "vocab_size", "must be >= 2");
  check(embed_size >= 1, "embed_size", "must be positive");
  check(hidden_size >= 1, "hidden_size", "must be positive");
  check(layers >= 1, "layers", "must be positive");
  check(bptt >= 1, "bptt", "must be positive");
  check(batch_size >= 1, "batch_size", "must be positive");
  check(epochs >= 1, "epochs", "must be positive");
  check(lr > 0.0, "lr", "must be positive");
  check(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay", "must lie in (0, 1]");
  check(decay_start_epoch >= 0, "decay_start_epoch", "must be >= 0");
  check(max_grad_norm > 0.0, "max_grad_norm", "must be positive");
  check(dropout >= 0.0 && dropout < 1.0, "dropout", "must lie in [0, 1)");
  check(l2 >= 0.0, "l2", "must be >= 0");
  check(init_scale > 0.0, "init_scale", "must be positive");

  check(prune.begin_epoch >= 0.0, "prune.begin_epoch", "must be >= 0");
  check(prune.end_epoch > prune.begin_epoch, "prune.end_epoch",
        "must exceed prune.begin_epoch");
  check(prune.end_epoch <= static_cast<double>(epochs), "prune.end_epoch",
        "must not exceed epochs");
  check(prune.prune_every >= 1, "prune.prune_every", "must be positive");
  check(prune.exponent > 0.0, "prune.exponent", "must be positive");
  check(prune.s_initial >= 0.0 && prune.s_initial < 1.0, "prune.s_initial",
        "must lie in [0, 1)");

  check(cmr.p0 >= 0.0 && cmr.p0 < 1.0, "cmr.p0", "must lie in [0, 1)");
  check(bcd.period_epochs >= 1, "bcd.period_epochs", "must be positive");
  check(penalty.lambda >= 0.0, "penalty.lambda", "must be >= 0");

  check(variants.size() == 1 || variants.size() == layers, "variants",
        "needs 1 entry or one per layer");
  for (std::size_t i = 0; i < variants.size(); ++i)
    validate_variant(variants[i], "variants[" + std::to_string(i) + "]");
}

std::string to_json(const TrainConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["vocab_size"] = c.vocab_size;
  j["embed_size"] = c.embed_size;
  j["hidden_size"] = c.hidden_size;
  j["layers"] = c.layers;
  j["bptt"] = c.bptt;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["lr_decay"] = c.lr_decay;
  j["decay_start_epoch"] = c.decay_start_epoch;
  j["max_grad_norm"] = c.max_grad_norm;
  j["dropout"] = c.dropout;
  j["l2"] = c.l2;
  j["forget_bias"] = c.forget_bias;
  j["init_scale"] = c.init_scale;
  j["prune"] = {{"begin_epoch", c.prune.begin_epoch},
                {"end_epoch", c.prune.end_epoch},
                {"prune_every", c.prune.prune_every},
                {"exponent", c.prune.exponent},
                {"s_initial", c.prune.s_initial}};
  j["cmr"] = {{"enabled", c.cmr.enabled},
              {"kind", to_string(c.cmr.kind)},
              {"p0", c.cmr.p0},
              {"share_timesteps", c.cmr.share_timesteps}};
  j["bcd"] = {{"enabled", c.bcd.enabled},
              {"period_epochs", c.bcd.period_epochs}};
  j["penalty"] = {{"mode", to_string(c.penalty.mode)},
                  {"lambda", c.penalty.lambda}};
  j["variants"] = ordered_json::array();
  for (const auto& v : c.variants) j["variants"].push_back(variant_json(v));
  return j.dump(2) + "\n";
}

TrainConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  TrainConfig c;
  {
    Fields f(j, "");
    f.get("seed", c.seed);
    f.get("vocab_size", c.vocab_size);
    f.get("embed_size", c.embed_size);
    f.get("hidden_size", c.hidden_size);
    f.get("layers", c.layers);
    f.get("bptt", c.bptt);
    f.get("batch_size", c.batch_size);
    f.get("epochs", c.epochs);
    f.get("lr", c.lr);
    f.get("lr_decay", c.lr_decay);
    f.get("decay_start_epoch", c.decay_start_epoch);
    f.get("max_grad_norm", c.max_grad_norm);
    f.get("dropout", c.dropout);
    f.get("l2", c.l2);
    f.get("forget_bias", c.forget_bias);
    f.get("init_scale", c.init_scale);
    if (const auto* p = f.sub("prune")) {
      Fields g(*p, ".prune");
      g.get("begin_epoch", c.prune.begin_epoch);
      g.get("end_epoch", c.prune.end_epoch);
      g.get("prune_every", c.prune.prune_every);
      g.get("exponent", c.prune.exponent);
      g.get("s_initial", c.prune.s_initial);
    }
    if (const auto* p = f.sub("cmr")) {
      Fields g(*p, ".cmr");
      std::string kind = to_string(c.cmr.kind);
      g.get("enabled", c.cmr.enabled);
      g.get("kind", kind);
      g.get("p0", c.cmr.p0);
      g.get("share_timesteps", c.cmr.share_timesteps);
      try {
        c.cmr.kind = cmr_kind_from_string(kind);
      } catch (const ConfigError& e) {
        throw ConfigError(g.where("kind") + e.what());
      }
    }
    if (const auto* p = f.sub("bcd")) {
      Fields g(*p, ".bcd");
      g.get("enabled", c.bcd.enabled);
      g.get("period_epochs", c.bcd.period_epochs);
    }
    if (const auto* p = f.sub("penalty")) {
      Fields g(*p, ".penalty");
      std::string mode = to_string(c.penalty.mode);
      g.get("mode", mode);
      g.get("lambda", c.penalty.lambda);
      try {
        c.penalty.mode = penalty_mode_from_string(mode);
      } catch (const ConfigError& e) {
        throw ConfigError(g.where("mode") + e.what());
      }
    }
    if (const auto* p = f.sub("variants")) {
      if (!p->is_array() || p->empty())
        throw ConfigError(f.where("variants") + "expected a non-empty array");
      c.variants.clear();
      for (std::size_t i = 0; i < p->size(); ++i)
        c.variants.push_back(
            variant_from((*p)[i], ".variants[" + std::to_string(i) + "]"));
    }
  }
  c.validate();
  return c;
}

std::vector<std::string> preset_names() {
  return {"medium-lm-toy", "kp-only", "doped-lmf"};
}

TrainConfig preset(const std::string& name) {
  TrainConfig c;  // defaults are the medium-lm-toy settings
  if (name == "medium-lm-toy") return c;
  if (name == "kp-only") {
    c.variants[0].doping = false;
    c.variants[0].structured_cf = c.variants[0].target_cf;
    c.cmr.enabled = false;
    return c;
  }
  if (name == "doped-lmf") {
    c.variants[0].kind = VariantKind::kLmf;
    c.variants[0].structured_cf = 2.0 * c.variants[0].target_cf;
    return c;
  }
  std::string list;
  for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + name + "' (available: " + list + ")");
}

}  // namespace dkp
