#pragma once

#include <nlohmann/json.hpp>

#include "splatgrasp/camera.hpp"

namespace splatgrasp::detail {

using nlohmann::json;

inline json matrix_json(const Mat4& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return rows;
}

inline json transform_json(const RigidTransform& t) { return matrix_json(t.matrix()); }

inline RigidTransform transform_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw_io("expected a 4x4 matrix");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw_io("expected a 4x4 matrix");
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
  }
  return RigidTransform::from_matrix(m);
}

inline json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Vec3 vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw_io("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json camera_json(const Camera& c) {
  return {{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy},
          {"cx", c.cx},       {"cy", c.cy},         {"pose", transform_json(c.pose)}};
}

inline Camera camera_from_json(const json& j) {
  Camera c;
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.pose = transform_from_json(j.at("pose"));
  c.validate();
  return c;
}

}  // namespace splatgrasp::detail
