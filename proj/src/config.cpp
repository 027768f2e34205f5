#include "melstorm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "melstorm/error.hpp"

namespace melstorm {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const char* type_name(const json& j) { return j.type_name(); }

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError((path_.empty() ? std::string("<root>") : path_) + ": expected object, got " + type_name(j_));
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void number(const std::string& key, double& out) {
    if (const json* v = child(key)) {
      if (!v->is_number()) throw ConfigError(path(key) + ": expected number, got " + type_name(*v));
      out = v->get<double>();
    }
  }

  template <class U>
  void count(const std::string& key, U& out) {
    if (const json* v = child(key)) out = as_count<U>(*v, path(key));
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = child(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key) + ": expected boolean, got " + type_name(*v));
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = child(key)) {
      if (!v->is_string()) throw ConfigError(path(key) + ": expected string, got " + type_name(*v));
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path(key) + ": unknown key");
    }
  }

  template <class U>
  static U as_count(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return static_cast<U>(v.get<std::uint64_t>());
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() >= 0) return static_cast<U>(v.get<std::int64_t>());
      throw ConfigError(where + ": expected non-negative integer, got " + std::to_string(v.get<std::int64_t>()));
    }
    throw ConfigError(where + ": expected non-negative integer, got " + type_name(v));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Extent2 parse_extent(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2) throw ConfigError(where + ": expected array of two integers");
  return {Section::as_count<std::size_t>(v[0], where + ".0"), Section::as_count<std::size_t>(v[1], where + ".1")};
}

// Runs `check` and rewraps its Error as a ConfigError naming `where`.
template <class F>
void checked(const std::string& where, F&& check) {
  try {
    check();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void parse_data(const json& j, DataConfig& d) {
  Section s(j, "data");
  std::string source = d.source == DataSource::synth ? "synth" : "directory";
  s.string("source", source);
  if (source == "synth") {
    d.source = DataSource::synth;
  } else if (source == "directory") {
    d.source = DataSource::directory;
  } else {
    throw ConfigError("data.source: expected \"synth\" or \"directory\", got \"" + source + "\"");
  }
  s.string("path", d.path);
  s.count("n_per_class", d.n_per_class);
  s.count("seed", d.seed);
  if (const json* sp = s.child("split")) {
    Section t(*sp, "data.split");
    t.number("train", d.split.train);
    t.number("val", d.split.val);
    t.number("test", d.split.test);
    t.count("seed", d.split.seed);
    t.finish();
  }
  s.finish();
  if (d.n_per_class == 0) throw ConfigError("data.n_per_class: must be at least 1");
  checked("data.split", [&] { d.split.validate(); });
}

void parse_features(const json& j, ExperimentConfig& c) {
  Section s(j, "features");
  auto& f = c.features;
  std::size_t rate = static_cast<std::size_t>(f.sample_rate);
  s.count("sample_rate", rate);
  f.sample_rate = static_cast<int>(rate);
  s.count("n_fft", f.n_fft);
  s.count("hop_length", f.hop_length);
  s.count("n_mels", f.n_mels);
  s.number("fmin", f.fmin);
  s.number("fmax", f.fmax);
  s.number("top_db", f.top_db);
  s.count("clip_samples", f.clip_samples);
  s.number("max_shift_fraction", f.max_shift_fraction);
  s.boolean("augment", c.augment);
  s.count("augment_seed", c.augment_seed);
  s.finish();
  checked("features", [&] { f.validate(); });
}

void parse_model(const json& j, ExperimentConfig& c) {
  Section s(j, "model");
  auto& m = c.model;
  if (const json* layers = s.child("conv_layers")) {
    if (!layers->is_array()) throw ConfigError("model.conv_layers: expected array, got " + std::string(type_name(*layers)));
    m.conv_layers.clear();
    for (std::size_t i = 0; i < layers->size(); ++i) {
      const std::string where = "model.conv_layers." + std::to_string(i);
      Section l((*layers)[i], where);
      ConvLayerSpec spec;
      l.count("in_channels", spec.in_channels);
      l.count("out_channels", spec.out_channels);
      for (auto [key, field] : {std::pair{"kernel", &spec.kernel}, {"stride", &spec.stride}, {"padding", &spec.padding}}) {
        if (const json* v = l.child(key)) *field = parse_extent(*v, l.path(key));
      }
      l.finish();
      m.conv_layers.push_back(spec);
    }
  }
  s.count("n_classes", m.n_classes);
  s.count("n_mels", m.n_mels);
  s.number("bn_momentum", m.bn_momentum);
  s.number("bn_eps", m.bn_eps);
  s.count("seed", c.model_seed);
  s.finish();
  checked("model", [&] { m.validate(); });
}

void parse_train(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.number("lr", t.lr);
  s.count("epochs", t.epochs);
  s.count("batch_size", t.batch_size);
  s.count("seed", t.seed);
  s.finish();
  if (!(t.lr >= 0.0)) throw ConfigError("train.lr: must be >= 0");
  checked("train", [&] { t.validate(); });
}

void parse_poison(const json& j, ExperimentConfig& c) {
  Section s(j, "poison");
  bool enabled = true;
  PoisonConfig p;
  p.seed = 99;
  s.boolean("enabled", enabled);
  s.number("amplitude", p.amplitude);
  s.number("fraction", p.fraction);
  std::string target = to_string(p.apply_to);
  s.string("apply_to", target);
  checked("poison.apply_to", [&] { p.apply_to = parse_poison_target(target); });
  s.count("seed", p.seed);
  s.boolean("export", c.export_poisoned);
  s.finish();
  checked("poison", [&] { p.validate(); });
  c.poison = enabled ? std::optional<PoisonConfig>(p) : std::nullopt;
}

SweepSpec parse_sweep(const json& j, const std::string& where) {
  Section s(j, where);
  SweepSpec spec;
  spec.seed = 11;
  std::string kind = "fgsm";
  s.string("kind", kind);
  checked(where + ".kind", [&] { spec.attack.kind = parse_attack_kind(kind); });
  if (const json* grid = s.child("eps_grid")) {
    if (!grid->is_array()) throw ConfigError(where + ".eps_grid: expected array, got " + std::string(type_name(*grid)));
    spec.eps_grid.clear();
    for (std::size_t i = 0; i < grid->size(); ++i) {
      if (!(*grid)[i].is_number()) throw ConfigError(where + ".eps_grid." + std::to_string(i) + ": expected number");
      spec.eps_grid.push_back((*grid)[i].get<double>());
    }
  }
  s.number("eps_iter", spec.attack.eps_iter);
  s.count("nb_iter", spec.attack.nb_iter);
  s.number("cw_lr", spec.attack.cw_lr);
  s.count("cw_max_iterations", spec.attack.cw_max_iterations);
  s.number("cw_c", spec.attack.cw_c);
  s.number("cw_kappa", spec.attack.cw_kappa);
  s.number("clip_min", spec.attack.clip_min);
  s.number("clip_max", spec.attack.clip_max);
  s.count("sample_cap", spec.sample_cap);
  s.count("seed", spec.seed);
  s.finish();
  checked(where, [&] { spec.validate(); });
  return spec;
}

json sweep_json(const SweepSpec& s) {
  return {{"kind", to_string(s.attack.kind)},
          {"eps_grid", s.eps_grid},
          {"eps_iter", s.attack.eps_iter},
          {"nb_iter", s.attack.nb_iter},
          {"cw_lr", s.attack.cw_lr},
          {"cw_max_iterations", s.attack.cw_max_iterations},
          {"cw_c", s.attack.cw_c},
          {"cw_kappa", s.attack.cw_kappa},
          {"clip_min", s.attack.clip_min},
          {"clip_max", s.attack.clip_max},
          {"sample_cap", s.sample_cap},
          {"seed", s.seed}};
}

json extent_json(Extent2 e) { return json::array({e.h, e.w}); }

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  for (const auto kind : {AttackKind::fgsm, AttackKind::pgd, AttackKind::cw}) {
    SweepSpec s;
    s.attack.kind = kind;
    s.seed = 11;
    c.attacks.push_back(s);
  }
  return c;
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c = ExperimentConfig::defaults();
  Section root(doc, "");
  if (const json* v = root.child("data")) parse_data(*v, c.data);
  if (const json* v = root.child("features")) parse_features(*v, c);
  if (const json* v = root.child("model")) parse_model(*v, c);
  if (const json* v = root.child("train")) parse_train(*v, c.train);
  if (const json* v = root.child("poison")) parse_poison(*v, c);
  if (const json* v = root.child("attacks")) {
    if (!v->is_array()) throw ConfigError("attacks: expected array, got " + std::string(type_name(*v)));
    c.attacks.clear();
    for (std::size_t i = 0; i < v->size(); ++i) c.attacks.push_back(parse_sweep((*v)[i], "attacks." + std::to_string(i)));
  }
  root.string("output_dir", c.output_dir);
  root.count("jobs", c.jobs);
  root.finish();
  if (c.model.n_mels != c.features.n_mels) {
    throw ConfigError("model.n_mels: " + std::to_string(c.model.n_mels) + " does not match features.n_mels " +
                      std::to_string(c.features.n_mels));
  }
  if (c.data.source == DataSource::directory && c.data.path.empty()) {
    throw ConfigError("data.path: required when data.source is \"directory\"");
  }
  return c;
}

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "': expected key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::string path;
    std::istringstream parts(key);
    std::string part;
    std::vector<std::string> segments;
    while (std::getline(parts, part, '.')) segments.push_back(part);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const std::string& seg = segments[i];
      if (seg.empty()) throw ConfigError("override '" + item + "': empty path segment");
      path = join(path, seg);
      const bool last = i + 1 == segments.size();
      if (node->is_array()) {
        std::size_t idx = 0;
        try {
          idx = std::stoul(seg);
        } catch (const std::logic_error&) {
          throw ConfigError(path + ": expected array index");
        }
        if (idx >= node->size()) throw ConfigError(path + ": index out of range");
        node = &(*node)[idx];
      } else {
        if (node->is_null()) *node = json::object();
        if (!node->is_object()) throw ConfigError(path + ": cannot descend into " + std::string(type_name(*node)));
        node = &(*node)[seg];
      }
      if (last) *node = value;
    }
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
  }
  if (!overrides.empty()) {
    // Overrides into sections left at their defaults (e.g. attacks.0.nb_iter)
    // need the resolved document to address them.
    json resolved = to_json(parse_config(doc));
    resolved.merge_patch(doc);
    if (!doc.contains("poison")) resolved.erase("poison");
    bool touches_poison = false;
    for (const auto& o : overrides) touches_poison |= o.rfind("poison", 0) == 0;
    if (touches_poison && !doc.contains("poison")) resolved["poison"] = json::object();
    doc = std::move(resolved);
    apply_overrides(doc, overrides);
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json layers = json::array();
  for (const auto& l : c.model.conv_layers) {
    layers.push_back({{"in_channels", l.in_channels},
                      {"out_channels", l.out_channels},
                      {"kernel", extent_json(l.kernel)},
                      {"stride", extent_json(l.stride)},
                      {"padding", extent_json(l.padding)}});
  }
  json attacks = json::array();
  for (const auto& s : c.attacks) attacks.push_back(sweep_json(s));
  const auto& f = c.features;
  json doc{
      {"data",
       {{"source", c.data.source == DataSource::synth ? "synth" : "directory"},
        {"path", c.data.path},
        {"n_per_class", c.data.n_per_class},
        {"seed", c.data.seed},
        {"split", {{"train", c.data.split.train}, {"val", c.data.split.val}, {"test", c.data.split.test}, {"seed", c.data.split.seed}}}}},
      {"features",
       {{"sample_rate", f.sample_rate},
        {"n_fft", f.n_fft},
        {"hop_length", f.hop_length},
        {"n_mels", f.n_mels},
        {"fmin", f.fmin},
        {"fmax", f.fmax},
        {"top_db", f.top_db},
        {"clip_samples", f.clip_samples},
        {"max_shift_fraction", f.max_shift_fraction},
        {"augment", c.augment},
        {"augment_seed", c.augment_seed}}},
      {"model",
       {{"conv_layers", layers},
        {"n_classes", c.model.n_classes},
        {"n_mels", c.model.n_mels},
        {"bn_momentum", c.model.bn_momentum},
        {"bn_eps", c.model.bn_eps},
        {"seed", c.model_seed}}},
      {"train", {{"lr", c.train.lr}, {"epochs", c.train.epochs}, {"batch_size", c.train.batch_size}, {"seed", c.train.seed}}},
      {"attacks", attacks},
      {"output_dir", c.output_dir},
      {"jobs", c.jobs},
  };
  if (c.poison) {
    doc["poison"] = {{"enabled", true},
                     {"amplitude", c.poison->amplitude},
                     {"fraction", c.poison->fraction},
                     {"apply_to", to_string(c.poison->apply_to)},
                     {"seed", c.poison->seed},
                     {"export", c.export_poisoned}};
  }
  return doc;
}

std::string config_hash(const ExperimentConfig& config) {
  json doc = to_json(config);
  doc.erase("jobs");  // worker count never changes results
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace melstorm
