#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pprompt/core.hpp"
#include "pprompt/world.hpp"

namespace pprompt {

using Json = nlohmann::json;

namespace detail {

[[noreturn]] inline void schema_error(const std::string& field, const std::string& msg) {
  throw Error(ErrorCode::schema, field + ": " + msg);
}

inline const Json& at_field(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema_error(path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline double as_real(const Json& j, const std::string& path) {
  if (!j.is_number()) schema_error(path, "expected a finite number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(path, "expected a finite number");
  return v;
}

inline long long as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) schema_error(path, "expected an integer");
  return j.get<long long>();
}

inline std::uint64_t as_uint(const Json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    schema_error(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

// `cols` < 0 infers the width from the first row; an empty array yields 0×max(cols,0).
inline Matrix matrix_from_json(const Json& j, const std::string& path, Index cols = -1) {
  if (!j.is_array()) schema_error(path, "expected an array of rows");
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return Matrix(0, std::max<Index>(cols, 0));
  if (cols < 0) {
    if (!j[0].is_array()) schema_error(path + "[0]", "expected an array");
    cols = static_cast<Index>(j[0].size());
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array()) schema_error(rp, "expected an array");
    if (static_cast<Index>(row.size()) != cols)
      schema_error(rp, "expected " + std::to_string(cols) + " entries, got " +
                           std::to_string(row.size()));
    for (Index c = 0; c < cols; ++c)
      m(i, c) = as_real(row[static_cast<std::size_t>(c)], rp + "[" + std::to_string(c) + "]");
  }
  return m;
}

inline Vector vector_from_json(const Json& j, const std::string& path, Index size = -1) {
  if (!j.is_array()) schema_error(path, "expected an array");
  if (size >= 0 && static_cast<Index>(j.size()) != size)
    schema_error(path, "expected " + std::to_string(size) + " entries, got " +
                           std::to_string(j.size()));
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i)
    v(i) = as_real(j[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
  return v;
}

inline std::vector<int> ints_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array");
  std::vector<int> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(static_cast<int>(as_int(j[i], path + "[" + std::to_string(i) + "]")));
  return out;
}

}  // namespace detail

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::schema, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline Json to_json(const WorldSpec& s) {
  return Json{{"seed", s.seed},
              {"feature_dim", s.feature_dim},
              {"num_classes", s.num_classes},
              {"modes_per_class", s.modes_per_class},
              {"mode_spread", s.mode_spread},
              {"noise_std", s.noise_std},
              {"shots_per_class", s.shots_per_class},
              {"test_per_class", s.test_per_class}};
}

// Missing keys keep the values already in `base`.
inline WorldSpec world_spec_from_json(const Json& j, const std::string& path = "spec",
                                      WorldSpec base = {}) {
  using namespace detail;
  if (!j.is_object()) schema_error(path, "expected an object");
  auto get_int = [&](const char* key, int& out) {
    if (j.contains(key)) out = static_cast<int>(as_int(j[key], join_path(path, key)));
  };
  auto get_real = [&](const char* key, double& out) {
    if (j.contains(key)) out = as_real(j[key], join_path(path, key));
  };
  if (j.contains("seed")) base.seed = as_uint(j["seed"], join_path(path, "seed"));
  get_int("feature_dim", base.feature_dim);
  get_int("num_classes", base.num_classes);
  get_int("modes_per_class", base.modes_per_class);
  get_real("mode_spread", base.mode_spread);
  get_real("noise_std", base.noise_std);
  get_int("shots_per_class", base.shots_per_class);
  get_int("test_per_class", base.test_per_class);
  try {
    base.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::schema, e.what());
  }
  return base;
}

inline Json to_json(const LabeledSplit& s) {
  return Json{{"features", detail::matrix_to_json(s.features)},
              {"labels", s.labels},
              {"modes", s.modes}};
}

inline Json to_json(const FewShotTask& task) {
  return Json{{"spec", to_json(task.spec)},
              {"num_classes", task.num_classes},
              {"train", to_json(task.train)},
              {"test", to_json(task.test)}};
}

inline LabeledSplit split_from_json(const Json& j, const std::string& path, Index cols) {
  using namespace detail;
  LabeledSplit s;
  s.features = matrix_from_json(at_field(j, "features", path), path + ".features", cols);
  s.labels = ints_from_json(at_field(j, "labels", path), path + ".labels");
  if (j.contains("modes")) s.modes = ints_from_json(j["modes"], path + ".modes");
  return s;
}

inline FewShotTask task_from_json(const Json& j) {
  using namespace detail;
  FewShotTask task;
  task.spec = world_spec_from_json(at_field(j, "spec", ""), "spec");
  task.num_classes = j.contains("num_classes")
                         ? static_cast<int>(as_int(j["num_classes"], "num_classes"))
                         : task.spec.num_classes;
  task.train = split_from_json(at_field(j, "train", ""), "train", task.spec.feature_dim);
  task.test = split_from_json(at_field(j, "test", ""), "test", task.spec.feature_dim);
  task.validate();
  return task;
}

inline void save_task(const FewShotTask& task, const std::filesystem::path& path) {
  write_json_file(path, to_json(task));
}

inline FewShotTask load_task(const std::filesystem::path& path) {
  return task_from_json(read_json_file(path));
}

}  // namespace pprompt
