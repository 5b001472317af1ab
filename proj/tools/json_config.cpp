#include "json_config.hpp"

#include <sstream>

#include <json.hpp>

namespace abcran::cli {
namespace {

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    std::ostringstream os;
    os.precision(17);
    os << v.get<double>();
    return os.str();
  }
  throw CLI::ConfigError("unsupported JSON value " + v.dump());
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool default_also, bool, std::string) const {
  nlohmann::json out = nlohmann::json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& r = opt->results();
      out[name] = r.size() == 1 ? nlohmann::json(r.front()) : nlohmann::json(r);
    } else if (default_also && !opt->get_default_str().empty()) {
      out[name] = opt->get_default_str();
    }
  }
  return out.dump(2);
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(input);
  } catch (const nlohmann::json::parse_error& e) {
    throw CLI::ConfigError(std::string("invalid JSON config: ") + e.what());
  }
  if (!j.is_object()) throw CLI::ConfigError("JSON config must be an object");
  std::vector<std::string> parents;
  if (j.contains("command") && j.contains("config") && j["config"].is_object()) {
    parents = {j["command"].get<std::string>()};
    j = j["config"];
  } else if (const auto active = root_->get_subcommands(); !active.empty()) {
    parents = {active.front()->get_name()};
  }

  std::vector<CLI::ConfigItem> items;
  auto add = [&items](const std::vector<std::string>& where, const std::string& key, const nlohmann::json& value) {
    if (value.is_null()) return;
    CLI::ConfigItem item;
    item.parents = where;
    item.name = key;
    if (value.is_array()) {
      for (const auto& v : value) item.inputs.push_back(scalar_text(v));
    } else {
      item.inputs.push_back(scalar_text(value));
    }
    items.push_back(std::move(item));
  };
  for (const auto& [key, value] : j.items()) {
    if (value.is_object()) {
      for (const auto& [k, v] : value.items()) {
        if (v.is_object()) throw CLI::ConfigError("nested object under '" + key + "." + k + "'");
        add({key}, k, v);
      }
    } else {
      add(parents, key, value);
    }
  }
  return items;
}

}  // namespace abcran::cli
