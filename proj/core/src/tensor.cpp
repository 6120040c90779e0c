#include "p2mt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "p2mt/csv.hpp"
#include "p2mt/errors.hpp"
#include "p2mt/rng.hpp"

namespace p2mt {

using json = nlohmann::ordered_json;

std::int64_t IrregularTensor::observed_count() const {
  if (observed_cache_ < 0) {
    std::int64_t n = 0;
    for (const auto& m : masks) n += static_cast<std::int64_t>(m.sum());
    observed_cache_ = n;
  }
  return observed_cache_;
}

int IrregularTensor::index_of(const std::string& slice_id) const {
  for (int k = 0; k < num_slices(); ++k)
    if (slice_ids[k] == slice_id) return k;
  return -1;
}

void IrregularTensor::validate() const {
  const std::size_t K = slices.size();
  if (masks.size() != K || slice_ids.size() != K)
    throw DataError("tensor: slices, masks, and slice_ids must align");
  const auto J = static_cast<Eigen::Index>(feature_names.size());
  if (J < 1) throw DataError("tensor: feature list is empty");
  std::set<std::string> seen;
  for (std::size_t k = 0; k < K; ++k) {
    if (slices[k].rows() < 1)
      throw DataError("tensor: slice " + slice_ids[k] + " has no rows");
    if (slices[k].cols() != J)
      throw DataError("tensor: slice " + slice_ids[k] +
                      " column count does not match feature list");
    if (masks[k].rows() != slices[k].rows() ||
        masks[k].cols() != slices[k].cols())
      throw DataError("tensor: mask shape mismatch for slice " + slice_ids[k]);
    if (!seen.insert(slice_ids[k]).second)
      throw DataError("tensor: duplicate slice id " + slice_ids[k]);
  }
}

std::vector<std::string> LabelTable::static_task_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : static_labels) names.push_back(name);
  return names;
}

std::vector<std::string> LabelTable::dynamic_task_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : dynamic_labels) names.push_back(name);
  return names;
}

LabelTable LabelTable::restricted_to(const std::vector<std::string>& ids) const {
  std::set<std::string> keep(ids.begin(), ids.end());
  LabelTable out;
  for (const auto& [task, by_slice] : static_labels)
    for (const auto& [id, y] : by_slice)
      if (keep.count(id)) out.static_labels[task][id] = y;
  for (const auto& [task, by_slice] : dynamic_labels)
    for (const auto& [id, ys] : by_slice)
      if (keep.count(id)) out.dynamic_labels[task][id] = ys;
  return out;
}

void validate_labels(const IrregularTensor& t, const LabelTable& labels) {
  for (const auto& [task, by_slice] : labels.static_labels)
    for (const auto& [id, _] : by_slice)
      if (t.index_of(id) < 0)
        throw DataError("labels: task " + task + " references unknown slice " +
                        id);
  for (const auto& [task, by_slice] : labels.dynamic_labels)
    for (const auto& [id, ys] : by_slice) {
      int k = t.index_of(id);
      if (k < 0)
        throw DataError("labels: task " + task + " references unknown slice " +
                        id);
      if (static_cast<int>(ys.size()) != t.rows(k))
        throw DataError("labels: task " + task + " slice " + id + " has " +
                        std::to_string(ys.size()) + " labels for " +
                        std::to_string(t.rows(k)) + " rows");
    }
}

namespace {

Eigen::MatrixXd parse_matrix(const json& rows, const std::string& slice_id,
                             Eigen::Index expect_cols, bool binary) {
  if (!rows.is_array() || rows.empty())
    throw DataError("slice " + slice_id + ": rows must be a non-empty array");
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  Eigen::Index n_cols = -1;
  Eigen::MatrixXd m;
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array())
      throw DataError("slice " + slice_id + ": row " + std::to_string(i) +
                      " is not an array");
    if (n_cols < 0) {
      n_cols = static_cast<Eigen::Index>(row.size());
      if (expect_cols >= 0 && n_cols != expect_cols)
        throw DataError("slice " + slice_id + ": row width " +
                        std::to_string(n_cols) + " does not match " +
                        std::to_string(expect_cols));
      m.resize(n_rows, n_cols);
    }
    if (static_cast<Eigen::Index>(row.size()) != n_cols)
      throw DataError("slice " + slice_id + ": ragged rows (" +
                      std::to_string(row.size()) + " vs " +
                      std::to_string(n_cols) + ")");
    for (Eigen::Index j = 0; j < n_cols; ++j) {
      const json& v = row[static_cast<std::size_t>(j)];
      if (!v.is_number())
        throw DataError("slice " + slice_id + ": non-numeric entry");
      double x = v.get<double>();
      if (binary && x != 0.0 && x != 1.0)
        throw DataError("slice " + slice_id + ": mask entries must be 0 or 1");
      m(i, j) = x;
    }
  }
  return m;
}

}  // namespace

IrregularTensor load_tensor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tensor file: " + path);

  IrregularTensor t;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("tensor file line " + std::to_string(line_no) +
                      ": malformed JSON (" + std::string(e.what()) + ")");
    }
    if (!have_header) {
      if (!rec.is_object() || !rec.contains("features") ||
          !rec["features"].is_array())
        throw DataError("tensor file line " + std::to_string(line_no) +
                        ": first line must be a {\"features\": [...]} header");
      for (const auto& f : rec["features"]) {
        if (!f.is_string())
          throw DataError("tensor file line " + std::to_string(line_no) +
                          ": feature names must be strings");
        t.feature_names.push_back(f.get<std::string>());
      }
      if (t.feature_names.empty())
        throw DataError("tensor file line " + std::to_string(line_no) +
                        ": feature list is empty");
      have_header = true;
      continue;
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
        !rec.contains("rows"))
      throw DataError("tensor file line " + std::to_string(line_no) +
                      ": record needs string \"id\" and \"rows\"");
    std::string id = rec["id"].get<std::string>();
    Eigen::MatrixXd x = parse_matrix(
        rec["rows"], id, static_cast<Eigen::Index>(t.feature_names.size()),
        false);
    Eigen::MatrixXd mask;
    if (rec.contains("mask")) {
      mask = parse_matrix(rec["mask"], id, x.cols(), true);
      if (mask.rows() != x.rows())
        throw DataError("slice " + id + ": mask shape differs from rows");
    } else {
      mask = Eigen::MatrixXd::Ones(x.rows(), x.cols());
    }
    // unobserved entries are stored as zero
    x = x.cwiseProduct(mask);
    t.slices.push_back(std::move(x));
    t.masks.push_back(std::move(mask));
    t.slice_ids.push_back(std::move(id));
  }
  if (!have_header) throw DataError("tensor file is empty: " + path);
  t.validate();
  return t;
}

void save_tensor(const IrregularTensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write tensor file: " + path);
  json header;
  header["features"] = t.feature_names;
  out << header.dump() << '\n';
  for (int k = 0; k < t.num_slices(); ++k) {
    json rec;
    rec["id"] = t.slice_ids[k];
    json rows = json::array();
    for (Eigen::Index i = 0; i < t.slices[k].rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < t.slices[k].cols(); ++j)
        row.push_back(t.slices[k](i, j));
      rows.push_back(std::move(row));
    }
    rec["rows"] = std::move(rows);
    if ((t.masks[k].array() != 1.0).any()) {
      json mrows = json::array();
      for (Eigen::Index i = 0; i < t.masks[k].rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < t.masks[k].cols(); ++j)
          row.push_back(static_cast<int>(t.masks[k](i, j)));
        mrows.push_back(std::move(row));
      }
      rec["mask"] = std::move(mrows);
    }
    out << rec.dump() << '\n';
  }
}

LabelTable load_labels(const std::string& path) {
  auto rows = read_csv(path);
  if (rows.empty()) throw DataError("labels file is empty: " + path);
  const std::vector<std::string> header = {"slice_id", "task", "kind", "t",
                                           "label"};
  if (rows[0] != header)
    throw DataError("labels file must start with header slice_id,task,kind,t,label");

  // gather dynamic rows first, then assemble contiguous sequences
  std::map<std::string, std::map<std::string, std::map<int, int>>> dyn;
  LabelTable out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 5)
      throw DataError("labels file row " + std::to_string(r + 1) +
                      ": expected 5 fields");
    const std::string& id = row[0];
    const std::string& task = row[1];
    const std::string& kind = row[2];
    const std::string& t_str = row[3];
    const std::string& label_str = row[4];
    if (label_str != "0" && label_str != "1")
      throw DataError("labels file row " + std::to_string(r + 1) +
                      ": label must be 0 or 1");
    int y = label_str == "1" ? 1 : 0;
    if (kind == "static") {
      if (!t_str.empty())
        throw DataError("labels file row " + std::to_string(r + 1) +
                        ": static rows must leave t empty");
      auto [_, inserted] = out.static_labels[task].emplace(id, y);
      if (!inserted)
        throw DataError("labels file row " + std::to_string(r + 1) +
                        ": duplicate static label for slice " + id);
    } else if (kind == "dynamic") {
      int ti;
      try {
        std::size_t pos = 0;
        ti = std::stoi(t_str, &pos);
        if (pos != t_str.size() || ti < 0) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw DataError("labels file row " + std::to_string(r + 1) +
                        ": dynamic rows need a nonnegative integer t");
      }
      auto [_, inserted] = dyn[task][id].emplace(ti, y);
      if (!inserted)
        throw DataError("labels file row " + std::to_string(r + 1) +
                        ": duplicate dynamic label for slice " + id +
                        " at t=" + t_str);
    } else {
      throw DataError("labels file row " + std::to_string(r + 1) +
                      ": kind must be static or dynamic");
    }
  }
  for (auto& [task, by_slice] : dyn)
    for (auto& [id, by_t] : by_slice) {
      std::vector<int> seq(by_t.size(), 0);
      for (const auto& [ti, y] : by_t) {
        if (ti >= static_cast<int>(seq.size()))
          throw DataError("labels: task " + task + " slice " + id +
                          " has non-contiguous timesteps");
        seq[static_cast<std::size_t>(ti)] = y;
      }
      out.dynamic_labels[task][id] = std::move(seq);
    }
  return out;
}

void save_labels(const LabelTable& labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write labels file: " + path);
  write_csv_row(out, {"slice_id", "task", "kind", "t", "label"});
  for (const auto& [task, by_slice] : labels.static_labels)
    for (const auto& [id, y] : by_slice)
      write_csv_row(out, {id, task, "static", "", std::to_string(y)});
  for (const auto& [task, by_slice] : labels.dynamic_labels)
    for (const auto& [id, ys] : by_slice)
      for (std::size_t ti = 0; ti < ys.size(); ++ti)
        write_csv_row(out, {id, task, "dynamic", std::to_string(ti),
                            std::to_string(ys[ti])});
}

SplitResult split_tensor(const IrregularTensor& t, const LabelTable& labels,
                         double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  const int K = t.num_slices();
  if (K < 2) throw ConfigError("need at least 2 slices to split");

  const int n_train = static_cast<int>(
      std::ceil(train_fraction * static_cast<double>(K) - 1e-12));

  std::vector<int> order(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) order[static_cast<std::size_t>(k)] = k;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<bool> in_train(static_cast<std::size_t>(K), false);
  for (int i = 0; i < n_train; ++i)
    in_train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        true;

  SplitResult res;
  auto push = [&](IrregularTensor& dst, int k) {
    dst.slices.push_back(t.slices[static_cast<std::size_t>(k)]);
    dst.masks.push_back(t.masks[static_cast<std::size_t>(k)]);
    dst.slice_ids.push_back(t.slice_ids[static_cast<std::size_t>(k)]);
  };
  res.train_tensor.feature_names = t.feature_names;
  res.test_tensor.feature_names = t.feature_names;
  for (int k = 0; k < K; ++k)
    push(in_train[static_cast<std::size_t>(k)] ? res.train_tensor
                                               : res.test_tensor,
         k);
  res.train_labels = labels.restricted_to(res.train_tensor.slice_ids);
  res.test_labels = labels.restricted_to(res.test_tensor.slice_ids);
  return res;
}

}  // namespace p2mt
