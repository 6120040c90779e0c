#include "p2mt/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "p2mt/errors.hpp"

namespace p2mt {

using json = nlohmann::ordered_json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty())
    throw DataError("checkpoint: " + what + " must be a non-empty array");
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(n_rows, n_cols);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n_cols)
      throw DataError("checkpoint: ragged rows in " + what);
    for (Eigen::Index j = 0; j < n_cols; ++j)
      m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& arr, const std::string& what) {
  if (!arr.is_array())
    throw DataError("checkpoint: " + what + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

std::string checkpoint_to_json(const FactorModel& model, const TaskSet& heads) {
  json doc;
  doc["R"] = model.rank;
  doc["H"] = matrix_to_json(model.H);
  doc["V"] = matrix_to_json(model.V);
  json slices = json::array();
  for (int k = 0; k < model.num_slices(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    json s;
    s["id"] = model.slice_ids[ku];
    s["Q"] = matrix_to_json(model.Q[ku]);
    s["s"] = vector_to_json(model.s[ku]);
    slices.push_back(std::move(s));
  }
  doc["slices"] = std::move(slices);

  json hs;
  json statics = json::array();
  for (const auto& h : heads.statics) {
    json e;
    e["task"] = h.task_name;
    e["w"] = vector_to_json(h.w);
    e["b"] = h.b;
    statics.push_back(std::move(e));
  }
  json dynamics = json::array();
  for (const auto& h : heads.dynamics) {
    json e;
    e["task"] = h.task_name;
    e["hidden"] = h.hidden;
    e["Wi"] = matrix_to_json(h.Wi);
    e["Wf"] = matrix_to_json(h.Wf);
    e["Wo"] = matrix_to_json(h.Wo);
    e["Wg"] = matrix_to_json(h.Wg);
    e["bi"] = vector_to_json(h.bi);
    e["bf"] = vector_to_json(h.bf);
    e["bo"] = vector_to_json(h.bo);
    e["bg"] = vector_to_json(h.bg);
    e["w_out"] = vector_to_json(h.w_out);
    e["b_out"] = h.b_out;
    dynamics.push_back(std::move(e));
  }
  hs["static"] = std::move(statics);
  hs["dynamic"] = std::move(dynamics);
  doc["heads"] = std::move(hs);
  return doc.dump();
}

void save_checkpoint(const std::string& path, const FactorModel& model,
                     const TaskSet& heads) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << checkpoint_to_json(model, heads) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": malformed JSON (" + e.what() +
                    ")");
  }
  Checkpoint cp;
  if (!doc.contains("R") || !doc.contains("H") || !doc.contains("V") ||
      !doc.contains("slices"))
    throw DataError("checkpoint " + path + ": missing R, H, V, or slices");
  cp.model.rank = doc["R"].get<int>();
  cp.model.H = matrix_from_json(doc["H"], "H");
  cp.model.V = matrix_from_json(doc["V"], "V");
  for (const auto& s : doc["slices"]) {
    cp.model.slice_ids.push_back(s.at("id").get<std::string>());
    cp.model.Q.push_back(matrix_from_json(s.at("Q"), "Q"));
    cp.model.s.push_back(vector_from_json(s.at("s"), "s"));
  }
  cp.model.couple_U_to_QH();

  if (doc.contains("heads")) {
    const json& hs = doc["heads"];
    if (hs.contains("static"))
      for (const auto& e : hs["static"]) {
        StaticHead h;
        h.task_name = e.at("task").get<std::string>();
        h.w = vector_from_json(e.at("w"), "w");
        h.b = e.at("b").get<double>();
        cp.heads.statics.push_back(std::move(h));
      }
    if (hs.contains("dynamic"))
      for (const auto& e : hs["dynamic"]) {
        DynamicHead h;
        h.task_name = e.at("task").get<std::string>();
        h.hidden = e.at("hidden").get<int>();
        h.Wi = matrix_from_json(e.at("Wi"), "Wi");
        h.Wf = matrix_from_json(e.at("Wf"), "Wf");
        h.Wo = matrix_from_json(e.at("Wo"), "Wo");
        h.Wg = matrix_from_json(e.at("Wg"), "Wg");
        h.bi = vector_from_json(e.at("bi"), "bi");
        h.bf = vector_from_json(e.at("bf"), "bf");
        h.bo = vector_from_json(e.at("bo"), "bo");
        h.bg = vector_from_json(e.at("bg"), "bg");
        h.w_out = vector_from_json(e.at("w_out"), "w_out");
        h.b_out = e.at("b_out").get<double>();
        cp.heads.dynamics.push_back(std::move(h));
      }
  }
  return cp;
}

}  // namespace p2mt
