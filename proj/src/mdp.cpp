#include "psm/mdp.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "psm/random.hpp"

namespace psm {

TabularMdp::TabularMdp(int n_states, int n_actions, Matrix transition, double gamma,
                       std::optional<Vector> initial_dist)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      gamma_(gamma),
      initial_dist_(std::move(initial_dist)) {
    if (n_states <= 0 || n_actions <= 0) {
        throw ValidationError("TabularMdp: state and action counts must be positive");
    }
    if (transition_.rows() != static_cast<Eigen::Index>(n_states) * n_actions ||
        transition_.cols() != n_states) {
        throw ValidationError("TabularMdp: transition must be (|S|*|A|) x |S|");
    }
    if (initial_dist_ && initial_dist_->size() != n_states) {
        throw ValidationError("TabularMdp: initial distribution has wrong length");
    }
}

TabularMdp TabularMdp::with_gamma(double gamma) const {
    return TabularMdp(n_states_, n_actions_, transition_, gamma, initial_dist_);
}

TabularMdp TabularMdp::with_initial_dist(Vector mu) const {
    return TabularMdp(n_states_, n_actions_, transition_, gamma_, std::move(mu));
}

StochasticPolicy::StochasticPolicy(Matrix probs) : probs_(std::move(probs)) {}

StochasticPolicy StochasticPolicy::from_actions(const std::vector<int>& actions, int n_actions) {
    Matrix probs = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] < 0 || actions[s] >= n_actions) {
            throw ValidationError("StochasticPolicy: action out of range");
        }
        probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    return StochasticPolicy(std::move(probs));
}

void StochasticPolicy::validate(double tol) const {
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
        if ((probs_.row(s).array() < 0.0).any()) {
            throw ValidationError("StochasticPolicy: negative probability at state " +
                                  std::to_string(s));
        }
        if (std::abs(probs_.row(s).sum() - 1.0) > tol) {
            throw ValidationError("StochasticPolicy: row " + std::to_string(s) +
                                  " does not sum to 1");
        }
    }
}

RewardFunction RewardFunction::state_only(const Vector& state_values, int n_actions) {
    RewardFunction r{Vector(state_values.size() * n_actions)};
    for (Eigen::Index s = 0; s < state_values.size(); ++s) {
        r.values.segment(s * n_actions, n_actions).setConstant(state_values[s]);
    }
    return r;
}

Vector RewardFunction::state_values(int n_actions) const {
    const Eigen::Index n_states = values.size() / n_actions;
    Vector out(n_states);
    for (Eigen::Index s = 0; s < n_states; ++s) {
        const auto row = values.segment(s * n_actions, n_actions);
        if ((row.array() != row[0]).any()) {
            throw ValidationError("RewardFunction: reward depends on the action");
        }
        out[s] = row[0];
    }
    return out;
}

std::string ValidationReport::summary() const {
    if (ok()) return "ok";
    std::ostringstream out;
    for (const auto& v : violations) {
        out << v.constraint;
        if (v.state >= 0) out << " s=" << v.state;
        if (v.action >= 0) out << " a=" << v.action;
        out << " value=" << v.value << "\n";
    }
    return out.str();
}

ValidationReport validate_mdp(const TabularMdp& mdp, double tol) {
    ValidationReport report;
    const int n_actions = mdp.n_actions();
    for (int s = 0; s < mdp.n_states(); ++s) {
        for (int a = 0; a < n_actions; ++a) {
            const auto row = mdp.transition().row(pair_index(s, a, n_actions));
            const double min_entry = row.minCoeff();
            if (!row.allFinite()) {
                report.violations.push_back({"non-finite transition", s, a, 0.0});
                continue;
            }
            if (min_entry < 0.0) {
                report.violations.push_back({"negative transition probability", s, a, min_entry});
            }
            const double total = row.sum();
            if (std::abs(total - 1.0) > tol) {
                report.violations.push_back({"transition row does not sum to 1", s, a, total});
            }
        }
    }
    if (!(mdp.gamma() >= 0.0 && mdp.gamma() < 1.0)) {
        report.violations.push_back({"gamma outside [0,1)", -1, -1, mdp.gamma()});
    }
    if (const auto& mu = mdp.initial_dist()) {
        if (!mu->allFinite() || mu->minCoeff() < 0.0) {
            report.violations.push_back({"negative initial probability", -1, -1, mu->minCoeff()});
        }
        if (std::abs(mu->sum() - 1.0) > tol) {
            report.violations.push_back({"initial distribution does not sum to 1", -1, -1,
                                         mu->sum()});
        }
    }
    return report;
}

RewardFunction goal_reward(const TabularMdp& mdp, StateIndex goal) {
    if (goal < 0 || goal >= mdp.n_states()) {
        throw ValidationError("goal_reward: goal index " + std::to_string(goal) +
                              " out of range");
    }
    Vector state_values = Vector::Zero(mdp.n_states());
    state_values[goal] = 1.0;
    return RewardFunction::state_only(state_values, mdp.n_actions());
}

StochasticPolicy uniform_policy(const TabularMdp& mdp) {
    return StochasticPolicy(
        Matrix::Constant(mdp.n_states(), mdp.n_actions(), 1.0 / mdp.n_actions()));
}

TabularMdp toy_mdp(double gamma, std::optional<Vector> mu) {
    Matrix p = Matrix::Zero(4, 2);
    p(pair_index(0, 0, 2), 1) = 1.0;
    p(pair_index(0, 1, 2), 0) = 1.0;
    p(pair_index(1, 0, 2), 0) = 1.0;
    p(pair_index(1, 1, 2), 1) = 1.0;
    return TabularMdp(2, 2, std::move(p), gamma, std::move(mu));
}

TabularMdp random_mdp(int n_states, int n_actions, double gamma, std::uint64_t seed) {
    Rng rng(seed);
    Matrix p(static_cast<Eigen::Index>(n_states) * n_actions, n_states);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = rng.uniform();
        p.row(i) /= p.row(i).sum();
    }
    Vector mu(n_states);
    for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] = rng.uniform() + 1e-3;
    mu /= mu.sum();
    return TabularMdp(n_states, n_actions, std::move(p), gamma, std::move(mu));
}

StochasticPolicy random_policy(int n_states, int n_actions, std::uint64_t seed) {
    Rng rng(seed);
    Matrix probs(n_states, n_actions);
    for (Eigen::Index s = 0; s < probs.rows(); ++s) {
        for (Eigen::Index a = 0; a < probs.cols(); ++a) probs(s, a) = rng.uniform() + 1e-3;
        probs.row(s) /= probs.row(s).sum();
    }
    return StochasticPolicy(std::move(probs));
}

Vector random_distribution(int n, std::uint64_t seed) {
    Rng rng(seed);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform() + 1e-3;
    return v / v.sum();
}

std::string format_double(double value) {
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

double parse_double(std::string_view text) {
    double value = 0.0;
    const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
        throw ValidationError("cannot parse number '" + std::string(text) + "'");
    }
    return value;
}

namespace {

int parse_int(std::string_view text) {
    int value = 0;
    const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
        throw ValidationError("cannot parse integer '" + std::string(text) + "'");
    }
    return value;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> tokens;
    for (std::string token; in >> token;) tokens.push_back(token);
    return tokens;
}

}  // namespace

void write_mdp_text(std::ostream& out, const TabularMdp& mdp) {
    out << "mdp " << mdp.n_states() << ' ' << mdp.n_actions() << ' '
        << format_double(mdp.gamma()) << '\n';
    const Matrix& p = mdp.transition();
    for (Eigen::Index row = 0; row < p.rows(); ++row) {
        bool first = true;
        for (Eigen::Index next = 0; next < p.cols(); ++next) {
            if (p(row, next) == 0.0) continue;
            if (!first) out << ' ';
            out << next << ':' << format_double(p(row, next));
            first = false;
        }
        out << '\n';
    }
    if (const auto& mu = mdp.initial_dist()) {
        out << "mu";
        for (Eigen::Index s = 0; s < mu->size(); ++s) out << ' ' << format_double((*mu)[s]);
        out << '\n';
    }
}

std::string to_mdp_text(const TabularMdp& mdp) {
    std::ostringstream out;
    write_mdp_text(out, mdp);
    return out.str();
}

TabularMdp read_mdp_text(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("mdp text: empty input");
    const auto header = split_ws(line);
    if (header.size() != 4 || header[0] != "mdp") {
        throw ValidationError("mdp text: expected header 'mdp |S| |A| gamma'");
    }
    const int n_states = parse_int(header[1]);
    const int n_actions = parse_int(header[2]);
    const double gamma = parse_double(header[3]);
    if (n_states <= 0 || n_actions <= 0) throw ValidationError("mdp text: bad dimensions");

    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(n_states) * n_actions, n_states);
    for (Eigen::Index row = 0; row < p.rows(); ++row) {
        if (!std::getline(in, line)) {
            throw ValidationError("mdp text: missing transition line " + std::to_string(row));
        }
        for (const auto& token : split_ws(line)) {
            const auto colon = token.find(':');
            if (colon == std::string::npos) {
                throw ValidationError("mdp text: malformed entry '" + token + "'");
            }
            const int next = parse_int(std::string_view(token).substr(0, colon));
            if (next < 0 || next >= n_states) {
                throw ValidationError("mdp text: successor index out of range");
            }
            p(row, next) = parse_double(std::string_view(token).substr(colon + 1));
        }
    }
    std::optional<Vector> mu;
    while (std::getline(in, line)) {
        const auto tokens = split_ws(line);
        if (tokens.empty()) continue;
        if (tokens[0] != "mu" || tokens.size() != static_cast<std::size_t>(n_states) + 1) {
            throw ValidationError("mdp text: unexpected trailing line '" + line + "'");
        }
        Vector values(n_states);
        for (int s = 0; s < n_states; ++s) values[s] = parse_double(tokens[s + 1]);
        mu = std::move(values);
    }
    return TabularMdp(n_states, n_actions, std::move(p), gamma, std::move(mu));
}

TabularMdp parse_mdp_text(const std::string& text) {
    std::istringstream in(text);
    return read_mdp_text(in);
}

}  // namespace psm
