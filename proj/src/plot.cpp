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

#include "egonav/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace egonav {
namespace {

using nlohmann::json;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& text,
                std::vector<std::string>& written) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error(p.string() + ": cannot open for writing");
  out << text;
  written.push_back(p.string());
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                           const std::vector<Series>& series) {
  const double W = 640, H = 360, L = 60, R = 150, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(title) << "</text>\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">"
      << num(xv) << "</text>\n"
      << "<text x=\"" << L - 5 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << escape(xlabel) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isfinite(s.y[i])) o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    o << "\"/>\n<text x=\"" << W - R + 10 << "\" y=\"" << T + 15 * k + 10 << "\" fill=\"" << color
      << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_paths(const std::string& title, const SceneMap& scene,
                      const std::vector<std::vector<Vec2>>& paths,
                      const std::vector<Vec2>& goals) {
  const Box2& b = scene.bounds;
  const double S = 560.0 / std::max(b.extents().x(), b.extents().y());
  const double M = 20.0;
  const double W = b.extents().x() * S + 2 * M, H = b.extents().y() * S + 2 * M + 20;
  auto px = [&](double x) { return M + (x - b.min.x()) * S; };
  auto py = [&](double y) { return H - M - (y - b.min.y()) * S; };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"16\" text-anchor=\"middle\">" << escape(title)
    << "</text>\n"
    << "<rect x=\"" << px(b.min.x()) << "\" y=\"" << py(b.max.y()) << "\" width=\""
    << b.extents().x() * S << "\" height=\"" << b.extents().y() * S
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (const Box2& box : obstacles_at(scene, 0.0)) {
    o << "<rect x=\"" << px(box.min.x()) << "\" y=\"" << py(box.max.y()) << "\" width=\""
      << box.extents().x() * S << "\" height=\"" << box.extents().y() * S
      << "\" fill=\"#bbbbbb\"/>\n";
  }
  for (std::size_t k = 0; k < paths.size(); ++k) {
    o << "<polyline fill=\"none\" stroke=\"" << kPalette[k % std::size(kPalette)]
      << "\" stroke-opacity=\"0.7\" points=\"";
    for (const Vec2& p : paths[k]) o << px(p.x()) << ',' << py(p.y()) << ' ';
    o << "\"/>\n";
  }
  for (const Vec2& g : goals) {
    o << "<path d=\"M" << px(g.x()) - 4 << ',' << py(g.y()) - 4 << " l8,8 m0,-8 l-8,8\" "
      << "stroke=\"black\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::string> plot_report(const std::string& report, const std::string& out_dir) {
  std::ifstream in(report);
  if (!in) throw ValidationError(report + ": cannot open report");
  std::vector<json> records;
  std::string line;
  try {
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const json whole = json::parse(text, nullptr, false);
    if (!whole.is_discarded()) {
      records.push_back(whole);
    } else {
      std::istringstream lines(text);
      while (std::getline(lines, line)) {
        if (!line.empty()) records.push_back(json::parse(line));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(report + ": " + e.what());
  }
  if (records.empty()) throw ValidationError(report + ": empty report");
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  std::vector<std::string> written;

  try {
    if (records.size() == 1 && records[0].contains("paths")) {
      const json& r = records[0];
      const SceneMap scene = parse_scene(r.at("scene"));
      std::vector<std::vector<Vec2>> paths;
      std::vector<Vec2> goals;
      for (const json& p : r.at("paths")) {
        std::vector<Vec2> path;
        for (const json& q : p) path.emplace_back(q.at(0).get<double>(), q.at(1).get<double>());
        paths.push_back(std::move(path));
      }
      if (r.contains("goals")) {
        for (const json& g : r.at("goals")) goals.emplace_back(g.at(0).get<double>(), g.at(1).get<double>());
      }
      write_file(dir / "paths.svg", svg_paths("pelvis paths", scene, paths, goals), written);
      if (r.contains("episodes_detail")) {
        Series ret{"return", {}, {}}, dist{"final distance", {}, {}};
        int i = 0;
        for (const json& e : r.at("episodes_detail")) {
          ret.x.push_back(i);
          ret.y.push_back(e.at("return").get<double>());
          dist.x.push_back(i++);
          dist.y.push_back(e.at("final_distance").get<double>());
        }
        write_file(dir / "episodes.svg", svg_line_chart("per-episode results", "episode", {ret, dist}),
                   written);
      }
      return written;
    }
    // Training metrics log.
    Series ret{"eval return", {}, {}}, sr{"eval success", {}, {}}, kl{"KL to prior", {}, {}};
    Series vloss{"value loss", {}, {}}, ent{"entropy", {}, {}};
    for (const json& r : records) {
      const double e = r.at("epoch").get<double>();
      ret.x.push_back(e), ret.y.push_back(r.at("eval_return").get<double>());
      sr.x.push_back(e), sr.y.push_back(r.at("eval_success_rate").get<double>());
      kl.x.push_back(e), kl.y.push_back(r.at("kl_to_prior").get<double>());
      vloss.x.push_back(e), vloss.y.push_back(r.at("value_loss").get<double>());
      ent.x.push_back(e), ent.y.push_back(r.at("entropy").get<double>());
    }
    write_file(dir / "return.svg", svg_line_chart("evaluation return", "epoch", {ret}), written);
    write_file(dir / "success.svg", svg_line_chart("evaluation success rate", "epoch", {sr}), written);
    write_file(dir / "kl.svg", svg_line_chart("KL to N(0, I)", "epoch", {kl}), written);
    write_file(dir / "losses.svg", svg_line_chart("losses", "epoch", {vloss, ent}), written);
  } catch (const json::exception& e) {
    throw ValidationError(report + ": " + e.what());
  }
  return written;
}

}  // namespace egonav
