// Copyright 2026 The egonav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Static SVG charts: metric traces and top-down path overlays.

#ifndef EGONAV_PLOT_HPP_
#define EGONAV_PLOT_HPP_

#include <string>
#include <vector>

#include "egonav/scene.hpp"

namespace egonav {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                           const std::vector<Series>& series);

// Obstacles at time 0 in grey, one polyline per path, goals as crosses.
std::string svg_paths(const std::string& title, const SceneMap& scene,
                      const std::vector<std::vector<Vec2>>& paths,
                      const std::vector<Vec2>& goals = {});

// Accepts an eval report (JSON) or a training metrics log (JSONL). Returns
// the files written.
std::vector<std::string> plot_report(const std::string& report, const std::string& out_dir);

}  // namespace egonav

#endif  // EGONAV_PLOT_HPP_
