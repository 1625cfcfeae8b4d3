#include "lmnet/config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace lmnet {

using nlohmann::json;

namespace {

class JsonWriter {
 public:
  template <typename T>
  void field(const char* key, T& value) {
    out_[key] = value;
  }
  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    JsonWriter child;
    fn(child);
    out_[key] = std::move(child.out_);
  }
  json& result() { return out_; }

 private:
  json out_ = json::object();
};

class JsonReader {
 public:
  JsonReader(const json& node, std::string where) : node_(node), where_(std::move(where)) {
    if (!node_.is_object()) fail(ErrorKind::Parse, "config: " + label() + " must be an object");
  }

  template <typename T>
  void field(const char* key, T& value) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    try {
      value = it->template get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, "config: " + path(key) + ": " + e.what());
    }
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    JsonReader child(*it, path(key));
    fn(child);
    child.finish();
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) fail(ErrorKind::Parse, "config: unknown key " + path(key.c_str()));
    }
  }

 private:
  std::string label() const { return where_.empty() ? "document" : where_; }
  std::string path(const char* key) const { return where_.empty() ? std::string(key) : where_ + "." + key; }

  const json& node_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename B>
void bind(B& b, ProjectionConfig& c) {
  b.field("width", c.width);
  b.field("height", c.height);
  b.field("azimuth_min", c.azimuth_min);
  b.field("azimuth_step", c.azimuth_step);
  b.field("elevation_min", c.elevation_min);
  b.field("elevation_step", c.elevation_step);
}

template <typename B>
void bind(B& b, CropBounds& c) {
  b.field("x_min", c.x_min);
  b.field("x_max", c.x_max);
  b.field("y_min", c.y_min);
  b.field("y_max", c.y_max);
  b.field("z_min", c.z_min);
  b.field("z_max", c.z_max);
}

template <typename B>
void bind(B& b, NetworkWidths& w) {
  b.field("encoder_channels", w.encoder);
  b.field("context_channels", w.context);
  b.field("decoder_channels", w.decoder);
}

template <typename B>
void bind(B& b, TrainConfig& t) {
  b.field("learning_rate", t.learning_rate);
  b.field("epochs", t.epochs);
  b.field("batch_size", t.batch_size);
  b.field("background_balance", t.background_balance);
  b.field("dropout_rate", t.dropout_rate);
  b.field("seed", t.seed);
}

template <typename B>
void bind(B& b, AugmentConfig& a) {
  b.field("enabled", a.enabled);
  b.field("max_angle", a.max_angle);
  b.field("per_object", a.per_object);
  b.field("replication", a.replication);
  b.field("seed", a.seed);
}

template <typename B>
void bind_per_class(B& b, std::array<double, kNumClasses>& values) {
  b.field("car", values[static_cast<std::size_t>(ObjectClass::Car)]);
  b.field("pedestrian", values[static_cast<std::size_t>(ObjectClass::Pedestrian)]);
  b.field("cyclist", values[static_cast<std::size_t>(ObjectClass::Cyclist)]);
}

template <typename B>
void bind(B& b, NmsConfig& n) {
  b.section("neighbor_radius", [&](auto& s) { bind_per_class(s, n.neighbor_radius); });
  b.section("suppression_threshold", [&](auto& s) { bind_per_class(s, n.suppression_threshold); });
  b.field("min_score", n.min_score);
  b.field("confidence_threshold", n.confidence_threshold);
}

template <typename B>
void bind(B& b, ClassSpawn& s) {
  b.field("count", s.count);
  b.field("length", s.length);
  b.field("width", s.width);
  b.field("height", s.height);
  b.field("reflectance", s.reflectance);
}

template <typename B>
void bind(B& b, SynthConfig& s) {
  b.section("car", [&](auto& c) { bind(c, s.car); });
  b.section("pedestrian", [&](auto& c) { bind(c, s.pedestrian); });
  b.section("cyclist", [&](auto& c) { bind(c, s.cyclist); });
  b.field("yaw", s.yaw);
  b.field("range", s.range);
  b.field("max_azimuth", s.max_azimuth);
  b.field("ground_z", s.ground_z);
  b.field("surface_density", s.surface_density);
  b.field("clutter_density", s.clutter_density);
  b.field("range_noise", s.range_noise);
  b.field("max_attempts", s.max_attempts);
  b.field("seed", s.seed);
}

template <typename B>
void bind(B& b, PipelineConfig& c) {
  b.section("projection", [&](auto& s) { bind(s, c.projection); });
  b.section("crop", [&](auto& s) { bind(s, c.crop); });
  b.section("network", [&](auto& s) { bind(s, c.network); });
  b.section("train", [&](auto& s) { bind(s, c.train); });
  b.section("augment", [&](auto& s) { bind(s, c.augment); });
  b.section("nms", [&](auto& s) { bind(s, c.nms); });
  b.section("synth", [&](auto& s) { bind(s, c.synth); });
  b.section("paths", [&](auto& s) {
    s.field("dataset", c.dataset_path);
    s.field("weights", c.weights_path);
    s.field("output", c.output_path);
  });
}

}  // namespace

void validate(const PipelineConfig& c) {
  validate(c.projection);
  validate(c.train);
  validate(c.nms);
  validate(c.synth);
  if (c.network.encoder < 1 || c.network.context < 1 || c.network.decoder < 1) {
    fail(ErrorKind::InvalidArgument, "network channel widths must be positive");
  }
  if (c.augment.replication < 1) fail(ErrorKind::InvalidArgument, "augment.replication must be >= 1");
}

std::string dump_config(const PipelineConfig& config) {
  PipelineConfig copy = config;
  JsonWriter w;
  bind(w, copy);
  return w.result().dump(2) + "\n";
}

PipelineConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("config: ") + e.what());
  }
  PipelineConfig config;
  JsonReader r(doc, "");
  bind(r, config);
  r.finish();
  // The synthetic generator projects with the pipeline's grid.
  config.synth.projection = config.projection;
  validate(config);
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace lmnet
