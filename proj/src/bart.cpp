#include "genpop/bart.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "genpop/error.hpp"
#include "genpop/random.hpp"

namespace genpop {

void BartConfig::validate() const {
  if (trees < 1) throw Error("bart: trees must be >= 1");
  if (draws < 1) throw Error("bart: draws must be >= 1");
  if (burn_in < 0) throw Error("bart: burn_in must be >= 0");
  if (!(alpha_tree > 0 && alpha_tree < 1)) throw Error("bart: alpha_tree must lie in (0,1)");
  if (!(beta_tree >= 0)) throw Error("bart: beta_tree must be >= 0");
  if (!(leaf_scale_k > 0)) throw Error("bart: leaf_scale_k must be positive");
  if (!(sigma_nu > 0)) throw Error("bart: sigma_nu must be positive");
  if (!(sigma_q > 0 && sigma_q < 1)) throw Error("bart: sigma_q must lie in (0,1)");
}

void to_json(nlohmann::json& j, const BartConfig& c) {
  j = {{"trees", c.trees},           {"burn_in", c.burn_in},         {"draws", c.draws},
       {"alpha_tree", c.alpha_tree}, {"beta_tree", c.beta_tree},     {"leaf_scale_k", c.leaf_scale_k},
       {"sigma_nu", c.sigma_nu},     {"sigma_q", c.sigma_q}};
}

namespace {

constexpr double kProbGrow = 0.28;
constexpr double kProbPrune = 0.28;

struct Node {
  int parent = -1;
  int left = -1;
  int right = -1;
  int var = -1;
  int cut = -1;
  int depth = 0;
  double mu = 0;
  bool alive = false;

  bool is_leaf() const { return left < 0; }
};

struct Tree {
  std::vector<Node> nodes;
  std::vector<int> free_slots;

  Tree() {
    nodes.push_back(Node{});
    nodes[0].alive = true;
  }

  int allocate() {
    if (!free_slots.empty()) {
      int i = free_slots.back();
      free_slots.pop_back();
      nodes[static_cast<std::size_t>(i)] = Node{};
      nodes[static_cast<std::size_t>(i)].alive = true;
      return i;
    }
    nodes.push_back(Node{});
    nodes.back().alive = true;
    return static_cast<int>(nodes.size() - 1);
  }

  void release(int i) {
    nodes[static_cast<std::size_t>(i)].alive = false;
    free_slots.push_back(i);
  }

  const Node& at(int i) const { return nodes[static_cast<std::size_t>(i)]; }
  Node& at(int i) { return nodes[static_cast<std::size_t>(i)]; }

  std::vector<int> leaves() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].alive && nodes[i].is_leaf()) out.push_back(static_cast<int>(i));
    return out;
  }

  // Internal nodes whose children are both leaves.
  std::vector<int> nogs() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Node& n = nodes[i];
      if (n.alive && !n.is_leaf() && at(n.left).is_leaf() && at(n.right).is_leaf())
        out.push_back(static_cast<int>(i));
    }
    return out;
  }

  bool uses_var(int v) const {
    for (const auto& n : nodes)
      if (n.alive && !n.is_leaf() && n.var == v) return true;
    return false;
  }
};

class Sampler {
 public:
  Sampler(const Eigen::MatrixXd& predictors, const Eigen::VectorXd& y_scaled, const BartConfig& cfg,
          double sigma_hat, std::uint64_t seed)
      : X_(predictors), y_(y_scaled), cfg_(cfg), rng_(make_rng(seed)) {
    n_ = static_cast<std::size_t>(X_.rows());
    p_ = static_cast<std::size_t>(X_.cols());
    cuts_.resize(p_);
    for (std::size_t v = 0; v < p_; ++v) {
      std::vector<double> u(X_.col(static_cast<Eigen::Index>(v)).data(),
                            X_.col(static_cast<Eigen::Index>(v)).data() + n_);
      std::sort(u.begin(), u.end());
      u.erase(std::unique(u.begin(), u.end()), u.end());
      for (std::size_t i = 1; i < u.size(); ++i) cuts_[v].push_back(0.5 * (u[i - 1] + u[i]));
    }
    const auto m = static_cast<std::size_t>(cfg_.trees);
    trees_.assign(m, Tree{});
    leaf_of_.assign(m, std::vector<int>(n_, 0));
    tree_fit_.assign(m, std::vector<double>(n_, 0.0));
    total_.assign(n_, 0.0);
    resid_.assign(n_, 0.0);
    leaf_sd_ = 0.5 / (cfg_.leaf_scale_k * std::sqrt(static_cast<double>(m)));
    boost::math::chi_squared chi(cfg_.sigma_nu);
    const double qchi = boost::math::quantile(chi, 1.0 - cfg_.sigma_q);
    lambda_ = sigma_hat * sigma_hat * qchi / cfg_.sigma_nu;
    sigma2_ = sigma_hat * sigma_hat;
  }

  // One backfitting sweep over all trees plus the variance draw.
  // Returns the number of accepted structural moves.
  int sweep() {
    int accepted = 0;
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      for (std::size_t i = 0; i < n_; ++i) resid_[i] = y_(static_cast<Eigen::Index>(i)) - total_[i] + tree_fit_[t][i];
      if (propose(t)) {
        ++accepted;
        structure_changed_[t] = true;
      }
      draw_leaves(t);
    }
    draw_sigma();
    return accepted;
  }

  void init_tracking() { structure_changed_.assign(trees_.size(), true); }

  double sigma2() const { return sigma2_; }
  const std::vector<double>& total() const { return total_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<std::vector<double>>& cuts() const { return cuts_; }
  std::vector<bool>& structure_changed() { return structure_changed_; }

 private:
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  int pick(std::size_t count) {
    return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, count - 1)(rng_));
  }

  double split_prob(int depth) const { return cfg_.alpha_tree * std::pow(1.0 + depth, -cfg_.beta_tree); }

  // log marginal likelihood of a leaf's residuals, up to terms that cancel.
  double leaf_loglik(double count, double sum) const {
    const double t2 = leaf_sd_ * leaf_sd_;
    const double denom = sigma2_ + count * t2;
    return 0.5 * std::log(sigma2_ / denom) + t2 * sum * sum / (2.0 * sigma2_ * denom);
  }

  // Available cut index range [lo, hi) for variable v at node.
  std::pair<int, int> cut_range(const Tree& tree, int node, std::size_t v) const {
    int lo = 0;
    int hi = static_cast<int>(cuts_[v].size());
    int child = node;
    int parent = tree.at(node).parent;
    while (parent >= 0) {
      const Node& pn = tree.at(parent);
      if (pn.var == static_cast<int>(v)) {
        if (pn.left == child) {
          hi = std::min(hi, pn.cut);
        } else {
          lo = std::max(lo, pn.cut + 1);
        }
      }
      child = parent;
      parent = pn.parent;
    }
    return {lo, std::max(lo, hi)};
  }

  bool draw_rule(const Tree& tree, int node, int& var, int& cut) {
    std::vector<std::pair<std::size_t, std::pair<int, int>>> options;
    for (std::size_t v = 0; v < p_; ++v) {
      auto r = cut_range(tree, node, v);
      if (r.second > r.first) options.push_back({v, r});
    }
    if (options.empty()) return false;
    const auto& [v, r] = options[static_cast<std::size_t>(pick(options.size()))];
    var = static_cast<int>(v);
    cut = r.first + pick(static_cast<std::size_t>(r.second - r.first));
    return true;
  }

  bool goes_left(std::size_t i, int var, int cut) const {
    return X_(static_cast<Eigen::Index>(i), var) <= cuts_[static_cast<std::size_t>(var)][static_cast<std::size_t>(cut)];
  }

  struct Stats {
    double n = 0, sum = 0;
  };

  bool propose(std::size_t t) {
    Tree& tree = trees_[t];
    std::vector<int>& leaf_of = leaf_of_[t];
    const double u = uniform();
    if (u < kProbGrow) {
      const auto leaves = tree.leaves();
      const int leaf = leaves[static_cast<std::size_t>(pick(leaves.size()))];
      int var = -1, cut = -1;
      if (!draw_rule(tree, leaf, var, cut)) return false;
      Stats l, r;
      for (std::size_t i = 0; i < n_; ++i) {
        if (leaf_of[i] != leaf) continue;
        Stats& s = goes_left(i, var, cut) ? l : r;
        s.n += 1;
        s.sum += resid_[i];
      }
      if (l.n == 0 || r.n == 0) return false;
      const Node& ln = tree.at(leaf);
      const bool sibling_is_leaf = ln.parent >= 0 && [&] {
        const Node& pn = tree.at(ln.parent);
        const int sib = pn.left == leaf ? pn.right : pn.left;
        return tree.at(sib).is_leaf();
      }();
      const double b = static_cast<double>(leaves.size());
      const double w_after = static_cast<double>(tree.nogs().size()) + 1.0 - (sibling_is_leaf ? 1.0 : 0.0);
      const double pd = split_prob(ln.depth);
      const double pc = split_prob(ln.depth + 1);
      const double log_r = std::log(kProbPrune / kProbGrow) + std::log(b / w_after) + std::log(pd) +
                           2.0 * std::log1p(-pc) - std::log1p(-pd) + leaf_loglik(l.n, l.sum) +
                           leaf_loglik(r.n, r.sum) - leaf_loglik(l.n + r.n, l.sum + r.sum);
      if (std::log(uniform()) >= log_r) return false;
      const int li = tree.allocate();
      const int ri = tree.allocate();
      Node& parent = tree.at(leaf);
      parent.var = var;
      parent.cut = cut;
      parent.left = li;
      parent.right = ri;
      for (int c : {li, ri}) {
        tree.at(c).parent = leaf;
        tree.at(c).depth = parent.depth + 1;
      }
      for (std::size_t i = 0; i < n_; ++i)
        if (leaf_of[i] == leaf) leaf_of[i] = goes_left(i, var, cut) ? li : ri;
      return true;
    }
    if (u < kProbGrow + kProbPrune) {
      const auto nogs = tree.nogs();
      if (nogs.empty()) return false;
      const int node = nogs[static_cast<std::size_t>(pick(nogs.size()))];
      const Node& nd = tree.at(node);
      Stats l, r;
      for (std::size_t i = 0; i < n_; ++i) {
        if (leaf_of[i] == nd.left) {
          l.n += 1;
          l.sum += resid_[i];
        } else if (leaf_of[i] == nd.right) {
          r.n += 1;
          r.sum += resid_[i];
        }
      }
      const double w = static_cast<double>(nogs.size());
      const double b_after = static_cast<double>(tree.leaves().size()) - 1.0;
      const double pd = split_prob(nd.depth);
      const double pc = split_prob(nd.depth + 1);
      const double log_r = std::log(kProbGrow / kProbPrune) + std::log(w / b_after) -
                           (std::log(pd) + 2.0 * std::log1p(-pc) - std::log1p(-pd)) -
                           (leaf_loglik(l.n, l.sum) + leaf_loglik(r.n, r.sum) -
                            leaf_loglik(l.n + r.n, l.sum + r.sum));
      if (std::log(uniform()) >= log_r) return false;
      const int li = nd.left, ri = nd.right;
      for (std::size_t i = 0; i < n_; ++i)
        if (leaf_of[i] == li || leaf_of[i] == ri) leaf_of[i] = node;
      tree.release(li);
      tree.release(ri);
      Node& pn = tree.at(node);
      pn.left = pn.right = -1;
      pn.var = pn.cut = -1;
      return true;
    }
    // change
    const auto nogs = tree.nogs();
    if (nogs.empty()) return false;
    const int node = nogs[static_cast<std::size_t>(pick(nogs.size()))];
    int var = -1, cut = -1;
    if (!draw_rule(tree, node, var, cut)) return false;
    const Node& nd = tree.at(node);
    Stats ol, orr, nl, nr;
    for (std::size_t i = 0; i < n_; ++i) {
      if (leaf_of[i] != nd.left && leaf_of[i] != nd.right) continue;
      Stats& old_side = leaf_of[i] == nd.left ? ol : orr;
      old_side.n += 1;
      old_side.sum += resid_[i];
      Stats& new_side = goes_left(i, var, cut) ? nl : nr;
      new_side.n += 1;
      new_side.sum += resid_[i];
    }
    if (nl.n == 0 || nr.n == 0) return false;
    const double log_r = leaf_loglik(nl.n, nl.sum) + leaf_loglik(nr.n, nr.sum) - leaf_loglik(ol.n, ol.sum) -
                         leaf_loglik(orr.n, orr.sum);
    if (std::log(uniform()) >= log_r) return false;
    const int li = nd.left, ri = nd.right;
    Node& mn = tree.at(node);
    mn.var = var;
    mn.cut = cut;
    for (std::size_t i = 0; i < n_; ++i)
      if (leaf_of[i] == li || leaf_of[i] == ri) leaf_of[i] = goes_left(i, var, cut) ? li : ri;
    return true;
  }

  void draw_leaves(std::size_t t) {
    Tree& tree = trees_[t];
    const auto& leaf_of = leaf_of_[t];
    std::vector<double> count(tree.nodes.size(), 0.0), sum(tree.nodes.size(), 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      count[static_cast<std::size_t>(leaf_of[i])] += 1;
      sum[static_cast<std::size_t>(leaf_of[i])] += resid_[i];
    }
    const double t2 = leaf_sd_ * leaf_sd_;
    for (int leaf : tree.leaves()) {
      const auto li = static_cast<std::size_t>(leaf);
      const double var = 1.0 / (count[li] / sigma2_ + 1.0 / t2);
      const double mean = var * sum[li] / sigma2_;
      tree.at(leaf).mu = mean + std::sqrt(var) * normal_(rng_);
    }
    auto& fit = tree_fit_[t];
    for (std::size_t i = 0; i < n_; ++i) {
      const double f = tree.at(leaf_of[i]).mu;
      total_[i] += f - fit[i];
      fit[i] = f;
    }
  }

  void draw_sigma() {
    double ssr = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double r = y_(static_cast<Eigen::Index>(i)) - total_[i];
      ssr += r * r;
    }
    std::chi_squared_distribution<double> chi(cfg_.sigma_nu + static_cast<double>(n_));
    sigma2_ = (cfg_.sigma_nu * lambda_ + ssr) / chi(rng_);
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  BartConfig cfg_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::size_t n_ = 0, p_ = 0;
  std::vector<std::vector<double>> cuts_;
  std::vector<Tree> trees_;
  std::vector<std::vector<int>> leaf_of_;
  std::vector<std::vector<double>> tree_fit_;
  std::vector<double> total_;
  std::vector<double> resid_;
  std::vector<bool> structure_changed_;
  double leaf_sd_ = 0;
  double lambda_ = 0;
  double sigma2_ = 1;
};

// Leaves reached by one target row at z = 1 and z = 0; the paths split only at z nodes.
std::pair<int, int> descend_pair(const Tree& tree, const std::vector<std::vector<double>>& cuts,
                                 const Eigen::MatrixXd& x, Eigen::Index row) {
  auto walk = [&](int node, double z) {
    while (!tree.at(node).is_leaf()) {
      const Node& n = tree.at(node);
      const double v = n.var == 0 ? z : x(row, n.var - 1);
      node = v <= cuts[static_cast<std::size_t>(n.var)][static_cast<std::size_t>(n.cut)] ? n.left : n.right;
    }
    return node;
  };
  int node = 0;
  while (!tree.at(node).is_leaf()) {
    const Node& n = tree.at(node);
    if (n.var == 0) {
      // z = 1 always falls right of the single z cut, z = 0 left.
      return {walk(n.right, 1.0), walk(n.left, 0.0)};
    }
    node = x(row, n.var - 1) <= cuts[static_cast<std::size_t>(n.var)][static_cast<std::size_t>(n.cut)] ? n.left
                                                                                                       : n.right;
  }
  return {node, node};
}

// Which target sets each target row belongs to, with its share 1/|set|.
using RowShares = std::vector<std::vector<std::pair<std::size_t, double>>>;

// Per leaf, per target set: (share of units landing there at z=1) minus (share at z=0).
using LeafWeights = std::vector<std::pair<int, std::vector<double>>>;

LeafWeights leaf_weights(const Tree& tree, const std::vector<std::vector<double>>& cuts, const Eigen::MatrixXd& x,
                         const RowShares& shares, std::size_t set_count) {
  LeafWeights out;
  if (!tree.uses_var(0)) return out;
  std::vector<std::vector<double>> w(tree.nodes.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto& row = shares[static_cast<std::size_t>(i)];
    if (row.empty()) continue;
    const auto [l1, l0] = descend_pair(tree, cuts, x, i);
    if (l1 == l0) continue;
    auto& w1 = w[static_cast<std::size_t>(l1)];
    auto& w0 = w[static_cast<std::size_t>(l0)];
    if (w1.empty()) w1.assign(set_count, 0.0);
    if (w0.empty()) w0.assign(set_count, 0.0);
    for (const auto& [s, share] : row) {
      w1[s] += share;
      w0[s] -= share;
    }
  }
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!w[i].empty()) out.emplace_back(static_cast<int>(i), std::move(w[i]));
  return out;
}

double residual_sd(const Eigen::MatrixXd& predictors, const Eigen::VectorXd& y) {
  const Eigen::Index n = predictors.rows();
  Eigen::MatrixXd design(n, predictors.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(predictors.cols()) = predictors;
  if (n > design.cols() + 1) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd r = y - design * beta;
    const double dof = static_cast<double>(n - qr.rank());
    if (dof > 0) return std::sqrt(r.squaredNorm() / dof);
  }
  const double m = y.mean();
  return std::sqrt((y.array() - m).square().sum() / std::max<double>(1.0, static_cast<double>(n - 1)));
}

}  // namespace

BartPosterior bart_average_effects(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                                   const std::vector<Eigen::MatrixXd>& target_sets, const BartConfig& config,
                                   std::uint64_t seed) {
  Eigen::Index rows = 0;
  for (const auto& t : target_sets) {
    if (t.cols() != x.cols()) throw Error("bart: target covariate count mismatch");
    rows += t.rows();
  }
  Eigen::MatrixXd stacked(rows, x.cols());
  std::vector<std::vector<std::size_t>> sets;
  Eigen::Index at = 0;
  for (const auto& t : target_sets) {
    stacked.middleRows(at, t.rows()) = t;
    std::vector<std::size_t> idx(static_cast<std::size_t>(t.rows()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::size_t>(at) + i;
    sets.push_back(std::move(idx));
    at += t.rows();
  }
  return bart_average_effects(x, z, y, stacked, sets, config, seed);
}

BartPosterior bart_average_effects(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                                   const Eigen::MatrixXd& targets, const std::vector<std::vector<std::size_t>>& sets,
                                   const BartConfig& config, std::uint64_t seed) {
  config.validate();
  if (x.rows() != y.size() || z.size() != y.size()) throw Error("bart: training dimensions disagree");
  if (y.size() < 2) throw Error("bart: need at least two training rows");
  if (targets.cols() != x.cols()) throw Error("bart: target covariate count mismatch");
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (z(i) != 0.0 && z(i) != 1.0)
      throw Error("bart: treatment indicator must be 0 or 1");
  RowShares shares(static_cast<std::size_t>(targets.rows()));
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (sets[s].empty()) throw Error("bart: empty target set");
    const double share = 1.0 / static_cast<double>(sets[s].size());
    for (auto r : sets[s]) {
      if (r >= shares.size()) throw Error("bart: target row out of range");
      shares[r].emplace_back(s, share);
    }
  }
  const auto& target_sets = sets;

  const double y_min = y.minCoeff();
  const double y_max = y.maxCoeff();
  const double range = y_max > y_min ? y_max - y_min : 1.0;
  const Eigen::VectorXd ys = ((y.array() - y_min) / range - 0.5).matrix();

  Eigen::MatrixXd predictors(x.rows(), x.cols() + 1);
  predictors.col(0) = z;
  predictors.rightCols(x.cols()) = x;
  const double sigma_hat = std::max(residual_sd(predictors, ys), 1e-3);

  Sampler sampler(predictors, ys, config, sigma_hat, seed);
  sampler.init_tracking();

  BartPosterior post;
  post.average_effects.assign(target_sets.size(), {});
  for (auto& v : post.average_effects) v.reserve(static_cast<std::size_t>(config.draws));
  post.fitted_mean.assign(static_cast<std::size_t>(y.size()), 0.0);

  std::vector<LeafWeights> weights(static_cast<std::size_t>(config.trees));
  long accepted_total = 0;
  const int total_sweeps = config.burn_in + config.draws;
  for (int it = 0; it < total_sweeps; ++it) {
    const int accepted = sampler.sweep();
    accepted_total += accepted;
    if (accepted == 0) ++post.sweeps_without_acceptance;
    if (it < config.burn_in) continue;

    auto& changed = sampler.structure_changed();
    for (std::size_t t = 0; t < weights.size(); ++t) {
      if (!changed[t]) continue;
      weights[t] = leaf_weights(sampler.trees()[t], sampler.cuts(), targets, shares, sets.size());
      changed[t] = false;
    }
    for (std::size_t s = 0; s < target_sets.size(); ++s) {
      double effect = 0;
      for (std::size_t t = 0; t < weights.size(); ++t)
        for (const auto& [leaf, w] : weights[t]) effect += sampler.trees()[t].at(leaf).mu * w[s];
      post.average_effects[s].push_back(effect * range);
    }
    const auto& total = sampler.total();
    for (std::size_t i = 0; i < total.size(); ++i)
      post.fitted_mean[i] += ((total[i] + 0.5) * range + y_min) / static_cast<double>(config.draws);
    post.sigma_draws.push_back(std::sqrt(sampler.sigma2()) * range);
  }
  post.acceptance_rate = static_cast<double>(accepted_total) /
                         (static_cast<double>(total_sweeps) * static_cast<double>(config.trees));
  if (post.sweeps_without_acceptance > 0)
    post.warnings.push_back(std::to_string(post.sweeps_without_acceptance) +
                            " sweeps accepted no tree move");
  return post;
}

}  // namespace genpop
