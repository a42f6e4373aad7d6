#include "f1net/measure.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace f1net {

Vec lift(const SpaceConfig& cfg, const Vec& x) {
  if (x.size() != cfg.d)
    throw config_error("lift: input has length " + std::to_string(x.size()) + ", expected " +
                       std::to_string(cfg.d));
  if (!cfg.bias) return x;
  Vec u(cfg.d + 1);
  u.head(cfg.d) = x;
  u[cfg.d] = 1.0;
  return u;
}

VecY evaluate_lifted(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                     const Vec& x_lifted) {
  if (x_lifted.size() != cfg.lifted_dim())
    throw config_error("evaluate: lifted input dimension mismatch");
  VecY sum = VecY::Zero(cfg.k);
  VecY comp = VecY::Zero(cfg.k);  // Kahan compensation per coordinate
  for (const Atom& at : a.atoms) {
    VecY term = at.weight * pos_part(apply(at.op, x_lifted));
    for (int i = 0; i < cfg.k; ++i) {
      double y = term[i] - comp[i];
      double t = sum[i] + y;
      comp[i] = (t - sum[i]) - y;
      sum[i] = t;
    }
  }
  return sum;
}

VecY evaluate(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a, const Vec& x) {
  return evaluate_lifted(cfg, a, lift(cfg, x));
}

Mat evaluate_many(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                  const Mat& x_lifted_cols) {
  if (x_lifted_cols.rows() != cfg.lifted_dim())
    throw config_error("evaluate_many: lifted input dimension mismatch");
  Mat sum = Mat::Zero(cfg.k, x_lifted_cols.cols());
  Mat comp = Mat::Zero(cfg.k, x_lifted_cols.cols());
  for (const Atom& at : a.atoms) {
    Mat term = at.weight * (at.op.mat * x_lifted_cols).cwiseMax(0.0);
    for (Eigen::Index j = 0; j < sum.cols(); ++j)
      for (Eigen::Index i = 0; i < sum.rows(); ++i) {
        double y = term(i, j) - comp(i, j);
        double t = sum(i, j) + y;
        comp(i, j) = (t - sum(i, j)) - y;
        sum(i, j) = t;
      }
  }
  return sum;
}

double radon_norm(const DiscreteOperatorMeasure& a) {
  double s = 0.0, c = 0.0;
  for (const Atom& at : a.atoms) {
    double y = std::abs(at.weight) - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

DiscreteOperatorMeasure merge_atoms(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                                    double tau) {
  if (tau < 0) throw config_error("merge_atoms: tau must be >= 0");
  struct Cluster {
    Mat seed;        // first member, used for membership tests
    Mat mean_num;    // |w|-weighted sum of member matrices
    double abs_sum = 0.0;
    double weight = 0.0;
  };
  std::vector<Cluster> clusters;
  for (const Atom& at : a.atoms) {
    bool placed = false;
    for (Cluster& c : clusters) {
      if (dstar_op(at.op.mat, c.seed) < tau) {
        c.mean_num += std::abs(at.weight) * at.op.mat;
        c.abs_sum += std::abs(at.weight);
        c.weight += at.weight;
        placed = true;
        break;
      }
    }
    if (!placed) {
      clusters.push_back({at.op.mat, std::abs(at.weight) * at.op.mat, std::abs(at.weight),
                          at.weight});
    }
  }
  DiscreteOperatorMeasure out;
  for (const Cluster& c : clusters) {
    if (c.weight == 0.0) continue;
    Mat rep = c.abs_sum > 0 ? Mat(c.mean_num / c.abs_sum) : c.seed;
    out.atoms.push_back({c.weight, project_unit_ball(cfg, make_operator(cfg, std::move(rep)))});
  }
  return out;
}

std::pair<DiscreteOperatorMeasure, DiscreteOperatorMeasure> hahn_jordan(
    const DiscreteOperatorMeasure& a) {
  DiscreteOperatorMeasure plus, minus;
  for (const Atom& at : a.atoms) {
    if (at.weight > 0)
      plus.atoms.push_back(at);
    else if (at.weight < 0)
      minus.atoms.push_back({-at.weight, at.op});
  }
  return {std::move(plus), std::move(minus)};
}

static const int kModelFormatVersion = 1;

std::string model_to_json(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a) {
  nlohmann::ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["space"] = {{"d", cfg.d},
                {"k", cfg.k},
                {"p_Y", cfg.p_Y == PNorm::Two ? "2" : "inf"},
                {"bias", cfg.bias}};
  auto atoms = nlohmann::ordered_json::array();
  for (const Atom& at : a.atoms) {
    nlohmann::ordered_json ja;
    ja["weight"] = double_to_hex(at.weight);
    auto m = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < at.op.mat.rows(); ++i)
      for (Eigen::Index jx = 0; jx < at.op.mat.cols(); ++jx)
        m.push_back(double_to_hex(at.op.mat(i, jx)));
    ja["matrix"] = std::move(m);
    atoms.push_back(std::move(ja));
  }
  j["atoms"] = std::move(atoms);
  return j.dump(2);
}

std::pair<SpaceConfig, DiscreteOperatorMeasure> model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("model: ") + e.what());
  }
  try {
    SpaceConfig cfg;
    const auto& sp = j.at("space");
    cfg.d = sp.at("d").get<int>();
    cfg.k = sp.at("k").get<int>();
    std::string p = sp.at("p_Y").get<std::string>();
    if (p == "2")
      cfg.p_Y = PNorm::Two;
    else if (p == "inf")
      cfg.p_Y = PNorm::Inf;
    else
      throw parse_error("model: unknown p_Y '" + p + "'");
    cfg.bias = sp.at("bias").get<bool>();
    cfg.validate();

    DiscreteOperatorMeasure a;
    const int rows = cfg.k, cols = cfg.lifted_dim();
    for (const auto& ja : j.at("atoms")) {
      double w = double_from_hex(ja.at("weight").get<std::string>());
      const auto& mv = ja.at("matrix");
      if (static_cast<int>(mv.size()) != rows * cols)
        throw parse_error("model: atom matrix has " + std::to_string(mv.size()) +
                          " entries, expected " + std::to_string(rows * cols));
      Mat m(rows, cols);
      int idx = 0;
      for (int i = 0; i < rows; ++i)
        for (int jx = 0; jx < cols; ++jx)
          m(i, jx) = double_from_hex(mv[idx++].get<std::string>());
      a.atoms.push_back({w, make_operator(cfg, std::move(m))});
    }
    return {cfg, std::move(a)};
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("model: ") + e.what());
  }
}

void save_model(const SpaceConfig& cfg, const DiscreteOperatorMeasure& a,
                const std::string& path) {
  std::ofstream f(path);
  if (!f) throw config_error("save_model: cannot open '" + path + "'");
  f << model_to_json(cfg, a) << "\n";
}

std::pair<SpaceConfig, DiscreteOperatorMeasure> load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("load_model: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return model_from_json(ss.str());
}

DiscreteOperatorMeasure load_model(const std::string& path, const SpaceConfig& expect) {
  auto [cfg, a] = load_model(path);
  if (!(cfg == expect))
    throw config_error("load_model: model space does not match the configured space");
  return a;
}

}  // namespace f1net
