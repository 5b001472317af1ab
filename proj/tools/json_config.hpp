#pragma once

#include <CLI11.hpp>

namespace abcran::cli {

/// CLI11 config reader for JSON objects. Flat keys ({"alpha": 0.7, "channels": [8, 16]})
/// apply to the subcommand being run; an object value applies to the subcommand
/// it is named after. A run manifest is accepted too: its "config" object is
/// applied to its "command". Null values are skipped.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                        std::string prefix) const override;
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;

 private:
  const CLI::App* root_;
};

}  // namespace abcran::cli
