#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpa3d/geometry.hpp"

namespace gpa3d {

// JSON-lines scene format: one scene object per line,
//   {"id", "domain", "points": [[x,y,z,i],...],
//    "boxes": [{"cx","cy","cz","h","w","l","yaw","score"?},...]}
// Angles in radians (yaw written normalized to [-pi, pi)), lengths in meters.

inline nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["id"] = scene.id;
  j["domain"] = scene.domain == DomainTag::kSource ? "source" : "target";
  auto points = nlohmann::json::array();
  for (const Point& p : scene.points) {
    points.push_back({p.x, p.y, p.z, p.intensity});
  }
  j["points"] = std::move(points);
  auto boxes = nlohmann::json::array();
  for (const Box3D& b : scene.boxes) {
    nlohmann::json jb = {{"cx", b.cx}, {"cy", b.cy}, {"cz", b.cz}, {"h", b.h},
                         {"w", b.w},   {"l", b.l},   {"yaw", norm_pi(b.yaw)}};
    if (b.score) jb["score"] = *b.score;
    boxes.push_back(std::move(jb));
  }
  j["boxes"] = std::move(boxes);
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene scene;
  scene.id = j.at("id").get<std::string>();
  const std::string domain = j.at("domain").get<std::string>();
  if (domain == "source") {
    scene.domain = DomainTag::kSource;
  } else if (domain == "target") {
    scene.domain = DomainTag::kTarget;
  } else {
    throw std::runtime_error("unknown domain tag '" + domain + "'");
  }
  for (const auto& jp : j.at("points")) {
    if (jp.size() != 4) throw std::runtime_error("point must have 4 entries");
    scene.points.push_back({jp[0].get<double>(), jp[1].get<double>(),
                            jp[2].get<double>(), jp[3].get<double>()});
  }
  for (const auto& jb : j.at("boxes")) {
    Box3D b;
    b.cx = jb.at("cx").get<double>();
    b.cy = jb.at("cy").get<double>();
    b.cz = jb.at("cz").get<double>();
    b.h = jb.at("h").get<double>();
    b.w = jb.at("w").get<double>();
    b.l = jb.at("l").get<double>();
    b.yaw = jb.at("yaw").get<double>();
    if (jb.contains("score")) b.score = jb.at("score").get<double>();
    if (b.h <= 0.0 || b.w <= 0.0 || b.l <= 0.0) {
      throw std::runtime_error("box dimensions must be strictly positive");
    }
    scene.boxes.push_back(b);
  }
  return scene;
}

inline std::string scenes_to_jsonl(const std::vector<Scene>& scenes) {
  std::string out;
  for (const Scene& s : scenes) {
    out += scene_to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Scene> scenes_from_jsonl(const std::string& text) {
  std::vector<Scene> scenes;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      scenes.push_back(scene_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("scene line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return scenes;
}

inline void save_scenes(const std::string& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << scenes_to_jsonl(scenes);
}

inline std::vector<Scene> load_scenes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return scenes_from_jsonl(buffer.str());
}

}  // namespace gpa3d
