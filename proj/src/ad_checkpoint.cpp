#include "vrkn/ad/checkpoint.hpp"

#include <fstream>

namespace vrkn::ad {

namespace {

using json = nlohmann::json;

json flatten(const Mat& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

Mat unflatten(const json& values, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!values.is_array() || static_cast<Eigen::Index>(values.size()) != rows * cols)
    throw ConfigError("checkpoint: value count mismatch for " + what);
  Mat m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[k++].get<double>();
  return m;
}

}  // namespace

json to_json(const ParamStore& store, const Adam* adam, const json& meta) {
  json doc;
  doc["format"] = "vrkn-checkpoint/1";
  json params = json::array();
  for (const Param* p : store.all())
    params.push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}, {"values", flatten(p->value)}});
  doc["params"] = std::move(params);
  if (adam) {
    const auto& c = adam->config();
    json opt = {{"step", adam->steps()}, {"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
    opt["clip_norm"] = c.clip_norm ? json(*c.clip_norm) : json(nullptr);
    json moments = json::array();
    for (const auto& [name, mo] : adam->moments())
      moments.push_back({{"name", name}, {"m", flatten(mo.m)}, {"v", flatten(mo.v)}});
    opt["moments"] = std::move(moments);
    doc["optimizer"] = std::move(opt);
  } else {
    doc["optimizer"] = nullptr;
  }
  doc["meta"] = meta.is_null() ? json::object() : meta;
  return doc;
}

json from_json(const json& doc, ParamStore& store, Adam* adam) {
  if (doc.value("format", "") != "vrkn-checkpoint/1") throw ConfigError("checkpoint: unknown format");
  const json& params = doc.at("params");
  if (params.size() != store.size())
    throw ConfigError("checkpoint: parameter count " + std::to_string(params.size()) + " does not match model (" +
                      std::to_string(store.size()) + ")");
  for (const json& entry : params) {
    const std::string name = entry.at("name").get<std::string>();
    Param* p = store.find(name);
    if (!p) throw ConfigError("checkpoint: unknown parameter " + name);
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    if (rows != p->value.rows() || cols != p->value.cols())
      throw ConfigError("checkpoint: shape mismatch for " + name);
    p->value = unflatten(entry.at("values"), rows, cols, name);
    p->zero_grad();
  }
  if (adam && doc.contains("optimizer") && !doc.at("optimizer").is_null()) {
    const json& opt = doc.at("optimizer");
    adam->set_steps(opt.at("step").get<long>());
    AdamConfig& c = adam->config();
    c.lr = opt.at("lr").get<double>();
    c.beta1 = opt.at("beta1").get<double>();
    c.beta2 = opt.at("beta2").get<double>();
    c.eps = opt.at("eps").get<double>();
    c.clip_norm = opt.at("clip_norm").is_null() ? std::nullopt : std::optional<double>(opt.at("clip_norm").get<double>());
    adam->moments().clear();
    for (const json& m : opt.at("moments")) {
      const std::string name = m.at("name").get<std::string>();
      const Param* p = store.find(name);
      if (!p) throw ConfigError("checkpoint: optimizer state for unknown parameter " + name);
      adam->moments()[name] = {unflatten(m.at("m"), p->value.rows(), p->value.cols(), name),
                               unflatten(m.at("v"), p->value.rows(), p->value.cols(), name)};
    }
  }
  return doc.value("meta", json::object());
}

void save_checkpoint(const std::string& path, const ParamStore& store, const Adam* adam, const json& meta) {
  std::ofstream out(path);
  if (!out) throw ConfigError("checkpoint: cannot write " + path);
  out << to_json(store, adam, meta).dump();
}

json load_checkpoint(const std::string& path, ParamStore& store, Adam* adam) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot read " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint: malformed JSON in " + path + ": " + e.what());
  }
  return from_json(doc, store, adam);
}

}  // namespace vrkn::ad
