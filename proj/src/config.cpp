#include "sslseg/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>

#include "sslseg/error.hpp"

namespace sslseg {

using nlohmann::json;

DataConfig::DataConfig() {
  train_region.name = "region-a";
  train_region.confuser_rate = 0.15f;
  val_region.name = "region-b";
  val_region.land_vv = 0.17f;
  val_region.land_vh = 0.045f;
  val_region.water_vv = 0.032f;
  val_region.water_vh = 0.009f;
  val_region.land_texture = 0.5f;
  val_region.confuser_rate = 0.35f;
}

ExperimentConfig::ExperimentConfig() { unetpp.variant = models::Variant::UNetPlusPlus; }

void ExperimentConfig::validate() const {
  if (workers < 0) throw ConfigError("workers must be non-negative");
  if (data.tile_size <= 0) throw ConfigError("data.tile_size must be positive");
  if (data.labeled <= 0) throw ConfigError("data.labeled must be positive");
  if (data.unlabeled < 0) throw ConfigError("data.unlabeled must be non-negative");
  if (data.val <= 0) throw ConfigError("data.val must be positive");
  if (!(data.min_valid_fraction >= 0.0 && data.min_valid_fraction <= 1.0))
    throw ConfigError("data.min_valid_fraction must lie in [0, 1]");
  unet.validate();
  unetpp.validate();
  if (unet.variant != models::Variant::UNet) throw ConfigError("models.unet.variant must be unet");
  if (unetpp.variant != models::Variant::UNetPlusPlus) throw ConfigError("models.unetpp.variant must be unetpp");
  loss.validate();
  filter.validate();
  crf.validate();
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (train.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (train.epochs_initial <= 0) throw ConfigError("train.epochs_initial must be positive");
  if (train.epochs_cycle <= 0) throw ConfigError("train.epochs_cycle must be positive");
  if (!(train.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (!(train.min_flood_fraction >= 0.0 && train.min_flood_fraction <= 1.0))
    throw ConfigError("train.min_flood_fraction must lie in [0, 1]");
  if (cycle.max_cycles < 0) throw ConfigError("cycle.max_cycles must be non-negative");
  if (!(cycle.plateau_delta >= 0.0)) throw ConfigError("cycle.plateau_delta must be non-negative");
  if (!(noisy_student.alpha >= 0.0 && noisy_student.alpha <= 1.0))
    throw ConfigError("noisy_student.alpha must lie in [0, 1]");
  if (!(noisy_student.temperature > 0.0)) throw ConfigError("noisy_student.temperature must be positive");
  if (noisy_student.epochs <= 0) throw ConfigError("noisy_student.epochs must be positive");
  if (!(noisy_student.input_noise >= 0.0)) throw ConfigError("noisy_student.input_noise must be non-negative");
  if (benchmark.tiles <= 0) throw ConfigError("benchmark.tiles must be positive");
  if (benchmark.repetitions < 3) throw ConfigError("benchmark.repetitions must be at least 3");
}

namespace {

// Shortest decimal that round-trips the float, so 0.15f is written as 0.15.
double tidy(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::strtod(std::string(buf, res.ptr).c_str(), nullptr);
}

// Walks one JSON object, remembering which keys were read so the leftovers
// can be reported by their full dotted path.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError("config section '" + label() + "' must be an object");
  }

  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : doc_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + child(key) + "'");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + child(key) + "' has the wrong type");
    }
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = doc_.find(key);
    return Section(it == doc_.end() ? empty : *it, child(key));
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void read(Section s, data::RegionProfile& r) {
  s.get("name", r.name);
  s.get("land_vv", r.land_vv);
  s.get("land_vh", r.land_vh);
  s.get("water_vv", r.water_vv);
  s.get("water_vh", r.water_vh);
  s.get("land_texture", r.land_texture);
  s.get("confuser_rate", r.confuser_rate);
}

json write(const data::RegionProfile& r) {
  return {{"name", r.name},         {"land_vv", tidy(r.land_vv)},           {"land_vh", tidy(r.land_vh)},
          {"water_vv", tidy(r.water_vv)}, {"water_vh", tidy(r.water_vh)},         {"land_texture", tidy(r.land_texture)},
          {"confuser_rate", tidy(r.confuser_rate)}};
}

void read(Section s, data::CompositeNormalization& n) {
  s.get("vv_min", n.vv_min);
  s.get("vv_max", n.vv_max);
  s.get("vh_min", n.vh_min);
  s.get("vh_max", n.vh_max);
  s.get("ratio_min", n.ratio_min);
  s.get("ratio_max", n.ratio_max);
}

json write(const data::CompositeNormalization& n) {
  return {{"vv_min", tidy(n.vv_min)}, {"vv_max", tidy(n.vv_max)},       {"vh_min", tidy(n.vh_min)},
          {"vh_max", tidy(n.vh_max)}, {"ratio_min", tidy(n.ratio_min)}, {"ratio_max", tidy(n.ratio_max)}};
}

void read(Section s, models::UNetConfig& m) {
  if (s.has("variant")) {
    std::string v;
    s.get("variant", v);
    try {
      m.variant = models::variant_from_string(v);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + s.child("variant") + "' must be unet or unetpp");
    }
  }
  s.get("encoder_widths", m.encoder_widths);
  s.get("depth", m.depth);
  s.get("pointwise_heavy", m.pointwise_heavy);
  s.get("expansion", m.expansion);
}

json write(const models::UNetConfig& m) {
  return {{"variant", models::to_string(m.variant)},
          {"encoder_widths", m.encoder_widths},
          {"depth", m.depth},
          {"pointwise_heavy", m.pointwise_heavy},
          {"expansion", m.expansion}};
}

void read(Section s, augment::AugmentSettings& a) {
  s.get("flip_probability", a.flip_probability);
  s.get("rotate_probability", a.rotate_probability);
  s.get("elastic_probability", a.elastic_probability);
  s.get("elastic_alpha", a.elastic_alpha);
  s.get("elastic_sigma", a.elastic_sigma);
}

json write(const augment::AugmentSettings& a) {
  return {{"flip_probability", a.flip_probability},
          {"rotate_probability", a.rotate_probability},
          {"elastic_probability", a.elastic_probability},
          {"elastic_alpha", a.elastic_alpha},
          {"elastic_sigma", a.elastic_sigma}};
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  {
    Section root(doc, "");
    root.get("seed", c.seed);
    root.get("workers", c.workers);
    {
      auto s = root.sub("data");
      s.get("path", c.data.path);
      s.get("tile_size", c.data.tile_size);
      s.get("labeled", c.data.labeled);
      s.get("unlabeled", c.data.unlabeled);
      s.get("val", c.data.val);
      s.get("flood_proportion", c.data.flood_proportion);
      s.get("speckle_looks", c.data.speckle_looks);
      s.get("swath_gap_rate", c.data.swath_gap_rate);
      s.get("min_valid_fraction", c.data.min_valid_fraction);
      read(s.sub("train_region"), c.data.train_region);
      read(s.sub("val_region"), c.data.val_region);
      read(s.sub("normalization"), c.data.normalization);
    }
    {
      auto s = root.sub("models");
      read(s.sub("unet"), c.unet);
      read(s.sub("unetpp"), c.unetpp);
    }
    {
      auto s = root.sub("loss");
      s.get("dice_eps", c.loss.dice_eps);
      s.get("focal_gamma", c.loss.focal_gamma);
      s.get("focal_alpha", c.loss.focal_alpha);
      s.get("dice_weight", c.loss.dice_weight);
      s.get("focal_weight", c.loss.focal_weight);
    }
    {
      auto s = root.sub("filter");
      s.get("confidence", c.filter.confidence);
      s.get("proportion", c.filter.proportion);
    }
    {
      auto s = root.sub("crf");
      s.get("iterations", c.crf.iterations);
      s.get("smoothness_weight", c.crf.smoothness_weight);
      s.get("smoothness_sigma", c.crf.smoothness_sigma);
      s.get("appearance_weight", c.crf.appearance_weight);
      s.get("appearance_sigma_xy", c.crf.appearance_sigma_xy);
      s.get("appearance_sigma_rgb", c.crf.appearance_sigma_rgb);
    }
    {
      auto s = root.sub("train");
      if (s.has("optimizer")) {
        std::string opt;
        s.get("optimizer", opt);
        if (opt != "adam") throw ConfigError("config key 'train.optimizer' only supports adam");
      }
      if (s.has("lr_schedule_cycle")) {
        std::string sched;
        s.get("lr_schedule_cycle", sched);
        if (sched != "cosine" && sched != "constant")
          throw ConfigError("config key 'train.lr_schedule_cycle' must be cosine or constant");
        c.train.cosine_cycle = sched == "cosine";
      }
      s.get("lr", c.train.lr);
      s.get("batch_size", c.train.batch_size);
      s.get("epochs_initial", c.train.epochs_initial);
      s.get("epochs_cycle", c.train.epochs_cycle);
      s.get("weight_decay", c.train.weight_decay);
      s.get("min_flood_fraction", c.train.min_flood_fraction);
      s.get("augment", c.train.augment);
    }
    {
      auto s = root.sub("cycle");
      s.get("max_cycles", c.cycle.max_cycles);
      s.get("plateau_delta", c.cycle.plateau_delta);
      s.get("use_tta", c.cycle.use_tta);
      s.get("use_crf", c.cycle.use_crf);
    }
    {
      auto s = root.sub("noisy_student");
      s.get("alpha", c.noisy_student.alpha);
      s.get("temperature", c.noisy_student.temperature);
      s.get("epochs", c.noisy_student.epochs);
      s.get("input_noise", c.noisy_student.input_noise);
      s.get("teacher", c.noisy_student.teacher);
      read(s.sub("strong_augment"), c.noisy_student.strong_augment);
    }
    read(root.sub("augment"), c.augment);
    {
      auto s = root.sub("benchmark");
      s.get("tiles", c.benchmark.tiles);
      s.get("repetitions", c.benchmark.repetitions);
      s.get("use_tta", c.benchmark.use_tta);
      s.get("use_crf", c.benchmark.use_crf);
    }
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["data"] = {{"path", c.data.path},
               {"tile_size", c.data.tile_size},
               {"labeled", c.data.labeled},
               {"unlabeled", c.data.unlabeled},
               {"val", c.data.val},
               {"flood_proportion", c.data.flood_proportion},
               {"speckle_looks", c.data.speckle_looks},
               {"swath_gap_rate", c.data.swath_gap_rate},
               {"min_valid_fraction", c.data.min_valid_fraction},
               {"train_region", write(c.data.train_region)},
               {"val_region", write(c.data.val_region)},
               {"normalization", write(c.data.normalization)}};
  j["models"] = {{"unet", write(c.unet)}, {"unetpp", write(c.unetpp)}};
  j["loss"] = {{"dice_eps", c.loss.dice_eps},
               {"focal_gamma", c.loss.focal_gamma},
               {"focal_alpha", c.loss.focal_alpha},
               {"dice_weight", c.loss.dice_weight},
               {"focal_weight", c.loss.focal_weight}};
  j["filter"] = {{"confidence", c.filter.confidence}, {"proportion", c.filter.proportion}};
  j["crf"] = {{"iterations", c.crf.iterations},
              {"smoothness_weight", c.crf.smoothness_weight},
              {"smoothness_sigma", c.crf.smoothness_sigma},
              {"appearance_weight", c.crf.appearance_weight},
              {"appearance_sigma_xy", c.crf.appearance_sigma_xy},
              {"appearance_sigma_rgb", c.crf.appearance_sigma_rgb}};
  j["train"] = {{"optimizer", "adam"},
                {"lr", c.train.lr},
                {"batch_size", c.train.batch_size},
                {"epochs_initial", c.train.epochs_initial},
                {"epochs_cycle", c.train.epochs_cycle},
                {"lr_schedule_cycle", c.train.cosine_cycle ? "cosine" : "constant"},
                {"weight_decay", c.train.weight_decay},
                {"min_flood_fraction", c.train.min_flood_fraction},
                {"augment", c.train.augment}};
  j["cycle"] = {{"max_cycles", c.cycle.max_cycles},
                {"plateau_delta", c.cycle.plateau_delta},
                {"use_tta", c.cycle.use_tta},
                {"use_crf", c.cycle.use_crf}};
  j["noisy_student"] = {{"alpha", c.noisy_student.alpha},
                        {"temperature", c.noisy_student.temperature},
                        {"epochs", c.noisy_student.epochs},
                        {"input_noise", c.noisy_student.input_noise},
                        {"teacher", c.noisy_student.teacher},
                        {"strong_augment", write(c.noisy_student.strong_augment)}};
  j["augment"] = write(c.augment);
  j["benchmark"] = {{"tiles", c.benchmark.tiles},
                    {"repetitions", c.benchmark.repetitions},
                    {"use_tta", c.benchmark.use_tta},
                    {"use_crf", c.benchmark.use_crf}};
  return j;
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* env = std::getenv("SSLSEG_SEED")) {
    try {
      std::size_t used = 0;
      const auto seed = std::stoull(env, &used);
      // stoull accepts a leading minus and wraps around
      if (used != std::string(env).size() || std::string(env).find('-') != std::string::npos) throw std::invalid_argument("not unsigned");
      config.seed = seed;
    } catch (const std::exception&) {
      throw ConfigError(std::string("SSLSEG_SEED is not an unsigned integer: ") + env);
    }
  }
  if (const char* env = std::getenv("SSLSEG_NUM_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n <= 0) throw std::invalid_argument("non-positive");
      config.workers = n;
    } catch (const std::exception&) {
      throw ConfigError(std::string("SSLSEG_NUM_WORKERS is not a positive integer: ") + env);
    }
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  auto config = config_from_json(doc);
  apply_env_overrides(config);
  return config;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace sslseg
