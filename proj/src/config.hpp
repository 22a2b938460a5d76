#pragma once

#include <string>

#include "dataset.hpp"
#include "neue.hpp"
#include "select.hpp"
#include "tree.hpp"

namespace falcon {

// Everything a pipeline run needs, fully defaulted. The JSON schema mirrors
// the member names; `set` takes dotted keys ("tree.delta", "data.width",
// "neue.costs.sramRead", ...) with JSON-encoded values.
struct RunConfig {
  SyntheticSpec data;
  GridDims grid;
  GaborBank bank;
  FeatureCostModel featureCost;
  FeatureSelectConfig select;
  TreeBuildConfig tree;
  NeueConfig neue;
  int resizeWidth = 0;   // 0 = leave images alone
  int resizeHeight = 0;
};

RunConfig defaultRunConfig();
RunConfig runConfigFromJson(const std::string& text);
RunConfig loadRunConfig(const std::string& path);
std::string runConfigToJson(const RunConfig& cfg);
void setRunConfigKey(RunConfig& cfg, const std::string& dottedKey, const std::string& value);

}  // namespace falcon
