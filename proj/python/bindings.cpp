#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "psm/codebook.hpp"
#include "psm/env.hpp"
#include "psm/flow.hpp"
#include "psm/harness.hpp"
#include "psm/infer.hpp"
#include "psm/learn.hpp"
#include "psm/oracle.hpp"

namespace py = pybind11;
using namespace psm;

namespace {

StochasticPolicy to_policy(const Matrix& probs) {
    StochasticPolicy pi(probs);
    pi.validate(1e-9);
    return pi;
}

Vector start_distribution(const TabularMdp& mdp, const std::optional<Vector>& mu) {
    if (mu) return *mu;
    if (mdp.initial_dist()) return *mdp.initial_dist();
    return Vector::Constant(mdp.n_states(), 1.0 / mdp.n_states());
}

py::dict report_dict(const InferenceReport& r) {
    py::dict out;
    out["method"] = r.method;
    out["status"] = r.status;
    out["objective"] = r.objective;
    out["max_violation"] = r.max_violation;
    out["relaxation"] = r.relaxation;
    out["iterations"] = r.iterations;
    out["converged"] = r.converged;
    return out;
}

ExperimentConfig config_from(const std::string& text, const std::filesystem::path& base_dir) {
    return parse_config(text, base_dir);
}

}  // namespace

PYBIND11_MODULE(_psm, m) {
    m.doc() = "Tabular proto successor measures";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

    py::class_<TabularMdp>(m, "Mdp")
        .def(py::init<int, int, Matrix, double, std::optional<Vector>>(), py::arg("n_states"), py::arg("n_actions"),
             py::arg("transition"), py::arg("gamma"), py::arg("initial_dist") = std::nullopt)
        .def_property_readonly("n_states", &TabularMdp::n_states)
        .def_property_readonly("n_actions", &TabularMdp::n_actions)
        .def_property_readonly("gamma", &TabularMdp::gamma)
        .def_property_readonly("transition", &TabularMdp::transition)
        .def_property_readonly("initial_dist", &TabularMdp::initial_dist)
        .def("validate", [](const TabularMdp& mdp) {
            std::vector<std::string> out;
            for (const auto& v : validate_mdp(mdp).violations) out.push_back(v.constraint);
            return out;
        })
        .def("to_text", &to_mdp_text)
        .def_static("from_text", &parse_mdp_text);

    m.def("toy_mdp", &toy_mdp, py::arg("gamma"), py::arg("mu") = std::nullopt);
    m.def("random_mdp", &random_mdp, py::arg("n_states"), py::arg("n_actions"), py::arg("gamma"), py::arg("seed"));
    m.def(
        "gridworld",
        [](int height, int width, double gamma, double slip) {
            GridSpec spec = open_grid_spec(height, width);
            spec.slip = slip;
            return build_gridworld(spec, gamma).mdp;
        },
        py::arg("height"), py::arg("width"), py::arg("gamma"), py::arg("slip") = 0.0);
    m.def(
        "four_room", [](int size, double gamma) { return build_four_room(size, gamma).mdp; }, py::arg("size"),
        py::arg("gamma"));
    m.def(
        "grid_layout", [](const std::string& text, double gamma) { return build_gridworld(parse_grid_layout(text), gamma).mdp; },
        py::arg("text"), py::arg("gamma"));
    m.def("goal_reward", [](const TabularMdp& mdp, int goal) { return goal_reward(mdp, goal).values; });

    m.def(
        "flow_operator",
        [](const TabularMdp& mdp, std::optional<Vector> mu) {
            const FlowOperator op = build_flow_operator(mdp, start_distribution(mdp, mu));
            return py::make_tuple(op.matrix, op.rhs);
        },
        py::arg("mdp"), py::arg("mu") = std::nullopt);
    m.def(
        "affine_basis",
        [](const TabularMdp& mdp, std::optional<Vector> mu) {
            const AffineBasis b = extract_affine_basis(build_flow_operator(mdp, start_distribution(mdp, mu)));
            return py::make_tuple(b.basis, b.bias);
        },
        py::arg("mdp"), py::arg("mu") = std::nullopt, "Null-space basis and minimum-norm bias of the flow constraint.");
    m.def("membership_residual", [](const Matrix& basis, const Vector& bias, const Vector& x) {
        return membership_residual(AffineBasis{basis, bias}, x);
    });

    m.def(
        "successor_measure",
        [](const TabularMdp& mdp, const Matrix& policy) { return successor_measure(mdp, to_policy(policy)).tensor; },
        py::arg("mdp"), py::arg("policy"));
    m.def(
        "visitation",
        [](const TabularMdp& mdp, const Matrix& policy, std::optional<Vector> mu) {
            return visitation(mdp, to_policy(policy), start_distribution(mdp, mu)).values;
        },
        py::arg("mdp"), py::arg("policy"), py::arg("mu") = std::nullopt);
    m.def(
        "value_iteration",
        [](const TabularMdp& mdp, const Vector& reward) {
            const auto vi = value_iteration(mdp, RewardFunction{reward});
            return py::make_tuple(vi.q, vi.greedy);
        },
        py::arg("mdp"), py::arg("reward"), "Conventional-scale Q* and its greedy actions.");

    m.def(
        "infer_w_exact_lp",
        [](const Matrix& basis, const Vector& bias, const Vector& reward) {
            const auto r = infer_w_exact_lp(AffineBasis{basis, bias}, RewardFunction{reward});
            py::dict out = report_dict(r.report);
            out["w"] = r.w;
            return out;
        },
        py::arg("basis"), py::arg("bias"), py::arg("reward"));

    m.def(
        "sample_seeds",
        [](std::size_t count, std::uint64_t rng_seed) {
            std::vector<std::uint64_t> out;
            for (const auto& s : sample_seeds(count, rng_seed)) out.push_back(s.z);
            return out;
        },
        py::arg("count"), py::arg("rng_seed"));
    m.def(
        "codebook_actions",
        [](std::uint64_t seed, int n_states, int n_actions) {
            return PolicyCodebook(n_actions).actions(LatentSeed{seed}, n_states);
        },
        py::arg("seed"), py::arg("n_states"), py::arg("n_actions"));

    py::class_<PsmModel>(m, "Model")
        .def_static(
            "load",
            [](const std::filesystem::path& path) {
                std::ifstream in(path, std::ios::binary);
                if (!in) throw ValidationError("model not found: " + path.string());
                return read_model(in);
            },
            py::arg("path"))
        .def_property_readonly("n_states", &PsmModel::n_states)
        .def_property_readonly("n_actions", &PsmModel::n_actions)
        .def_property_readonly("gamma", &PsmModel::gamma)
        .def_property_readonly("d", &PsmModel::d)
        .def_property_readonly("loss_curve", [](const PsmModel& model) { return model.loss_curve; })
        .def("state_measure", &PsmModel::state_measure, py::arg("w"))
        .def(
            "infer",
            [](const PsmModel& model, const Vector& state_reward, bool mass_bound, double relax_scale) {
                ModelInferenceOptions options;
                options.mass_bound = mass_bound;
                options.relax_scale = relax_scale;
                const RewardFunction reward = RewardFunction::state_only(state_reward, model.n_actions());
                const InferenceResult r = infer_w_model(model, reward, options);
                const QTable q = q_star(model, r.w, reward);
                py::dict out = report_dict(r.report);
                out["w"] = r.w;
                out["q"] = q;
                out["policy"] = greedy_policy(q);
                return out;
            },
            py::arg("state_reward"), py::arg("mass_bound") = true, py::arg("relax_scale") = 1.0,
            "Zero-shot inference for a state reward; returns w, Q, the greedy policy and the solver report.");

    // Config-driven commands, mirroring the command-line tool.
    m.def(
        "collect",
        [](const std::string& text, const std::filesystem::path& base_dir) {
            std::ostringstream log;
            const auto path = cmd_collect(config_from(text, base_dir), log);
            return py::make_tuple(path, log.str());
        },
        py::arg("config"), py::arg("base_dir") = ".");
    m.def(
        "train",
        [](const std::string& text, const std::filesystem::path& base_dir) {
            std::ostringstream log;
            const auto path = cmd_train(config_from(text, base_dir), log);
            return py::make_tuple(path, log.str());
        },
        py::arg("config"), py::arg("base_dir") = ".");
    m.def(
        "infer",
        [](const std::string& text, const std::filesystem::path& base_dir) {
            std::ostringstream log;
            const auto path = cmd_infer(config_from(text, base_dir), log);
            return py::make_tuple(path, log.str());
        },
        py::arg("config"), py::arg("base_dir") = ".");
    m.def(
        "evaluate",
        [](const std::string& text, const std::filesystem::path& base_dir) {
            std::ostringstream log;
            const EvaluationReport report = cmd_eval(config_from(text, base_dir), log);
            py::list goals;
            for (const auto& g : report.goals) {
                py::dict row;
                row["goal"] = g.goal;
                row["success"] = g.success;
                row["start_success"] = g.start_success;
                row["policy_error"] = g.policy_error;
                row["mismatches"] = g.mismatches;
                row["counted"] = g.counted;
                goals.append(row);
            }
            py::dict out;
            out["goals"] = goals;
            out["mean_error"] = report.mean_error;
            out["std_error"] = report.std_error;
            out["success_rate"] = report.success_rate;
            return out;
        },
        py::arg("config"), py::arg("base_dir") = ".");
}
