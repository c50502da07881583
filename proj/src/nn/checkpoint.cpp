#include "emgtl/nn/checkpoint.hpp"

#include <fstream>

#include "emgtl/errors.hpp"

namespace emgtl::nn {

using nlohmann::json;

namespace {

json tensor_json(const Tensor& t) { return t.storage(); }

void read_into(Tensor& t, const json& j, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != t.size())
    throw DataError("checkpoint " + what + " has " + std::to_string(v.size()) + " values, model expects " +
                    std::to_string(t.size()));
  t.storage() = v;
}

}  // namespace

json model_state_to_json(Model& model) {
  json params = json::array();
  for (Parameter* p : model.parameters()) {
    json e;
    e["name"] = p->name;
    e["shape"] = p->value.shape();
    e["frozen"] = p->frozen;
    e["value"] = tensor_json(p->value);
    e["adam_m"] = tensor_json(p->adam_m);
    e["adam_v"] = tensor_json(p->adam_v);
    params.push_back(std::move(e));
  }
  json banks = json::array();
  for (BatchNorm* bn : model.batch_norms()) {
    json layer = json::array();
    for (const auto& [subject, st] : bn->bank()) layer.push_back({{"subject", subject}, {"mean", st.mean}, {"var", st.var}});
    banks.push_back(std::move(layer));
  }
  return {{"optimizer_step", model.optimizer_step}, {"parameters", std::move(params)},
          {"batch_norm_banks", std::move(banks)}};
}

void model_state_from_json(Model& model, const json& j) {
  try {
    auto params = model.parameters();
    const json& jp = j.at("parameters");
    if (jp.size() != params.size())
      throw DataError("checkpoint has " + std::to_string(jp.size()) + " parameters, model has " +
                      std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const json& e = jp[i];
      if (e.at("name").get<std::string>() != params[i]->name)
        throw DataError("checkpoint parameter " + e.at("name").get<std::string>() + " does not match " +
                        params[i]->name);
      read_into(params[i]->value, e.at("value"), params[i]->name);
      read_into(params[i]->adam_m, e.at("adam_m"), params[i]->name + " adam_m");
      read_into(params[i]->adam_v, e.at("adam_v"), params[i]->name + " adam_v");
      params[i]->frozen = e.at("frozen").get<bool>();
    }
    auto bns = model.batch_norms();
    const json& jb = j.at("batch_norm_banks");
    if (jb.size() != bns.size()) throw DataError("checkpoint batch-norm layer count does not match the model");
    for (std::size_t i = 0; i < bns.size(); ++i) {
      std::map<int, BatchNorm::Stats> bank;
      for (const json& s : jb[i]) {
        BatchNorm::Stats st{s.at("mean").get<std::vector<double>>(), s.at("var").get<std::vector<double>>()};
        if (st.mean.size() != bns[i]->features() || st.var.size() != bns[i]->features())
          throw DataError("checkpoint batch-norm statistics have the wrong width");
        bank[s.at("subject").get<int>()] = std::move(st);
      }
      bns[i]->bank() = std::move(bank);
    }
    model.optimizer_step = j.at("optimizer_step").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint state: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const json& architecture,
                     Model& model, const json& extra) {
  json doc = extra;
  doc["format"] = "emgtl-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["kind"] = kind;
  doc["architecture"] = architecture;
  doc["state"] = model_state_to_json(model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
}

json read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "emgtl-checkpoint") throw DataError(path.string() + ": not a checkpoint");
  if (doc.value("version", 0) != kCheckpointVersion)
    throw DataError(path.string() + ": unsupported checkpoint version");
  return doc;
}

}  // namespace emgtl::nn
