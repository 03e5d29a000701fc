#pragma once

#include <envelope/error.hpp>
#include <envelope/estimators.hpp>

#include <json.hpp>

#include <fstream>
#include <string>

namespace envelope::io {

using nlohmann::json;

inline json matrix_to_json(const MatrixXd& m)
{
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

inline MatrixXd matrix_from_json(const json& j)
{
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const json& data = j.at("data");
    detail::require(static_cast<Index>(data.size()) == rows, "matrix row count mismatch in JSON");
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        detail::require(static_cast<Index>(data[i].size()) == cols, "matrix column count mismatch in JSON");
        for (Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[i][j2].get<double>();
    }
    return m;
}

inline json vector_to_json(const VectorXd& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline VectorXd vector_from_json(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

/// Serializes a fitted model. Doubles are written with round-trip precision,
/// so predictions after save/load are bit-identical.
inline json model_to_json(const FittedModel& m, const std::string& provenance = {})
{
    json j;
    j["format"] = "enhanced-envelope-model";
    j["version"] = 1;
    if (!provenance.empty()) j["provenance"] = provenance;
    j["estimator"] = to_string(m.kind);
    j["u"] = m.u;
    j["lambda"] = m.lambda;
    j["beta_hat"] = matrix_to_json(m.beta_hat);
    j["standardization"] = {{"means", vector_to_json(m.x_transform.means)},
                            {"sds", vector_to_json(m.x_transform.sds)},
                            {"constant", m.x_transform.constant}};
    j["y_center"] = vector_to_json(m.y_center);
    if (m.fit) {
        const auto& f = *m.fit;
        j["Gamma_hat"] = matrix_to_json(f.Gamma_hat);
        j["Omega_hat"] = matrix_to_json(f.Omega_hat);
        j["Omega0_hat"] = matrix_to_json(f.Omega0_hat);
        j["diagnostics"] = {{"objective_value", f.diagnostics.objective_value},
                            {"iterations", f.diagnostics.iterations},
                            {"projected_gradient_norm", f.diagnostics.projected_gradient_norm},
                            {"converged", f.diagnostics.converged}};
    }
    return j;
}

inline FittedModel model_from_json(const json& j)
{
    try {
        detail::require(j.value("format", "") == "enhanced-envelope-model",
                        "not an enhanced-envelope model document");
        FittedModel m;
        m.kind = parse_estimator_kind(j.at("estimator").get<std::string>());
        m.u = j.at("u").get<Index>();
        m.lambda = j.at("lambda").get<double>();
        m.beta_hat = matrix_from_json(j.at("beta_hat"));
        const json& s = j.at("standardization");
        m.x_transform.means = vector_from_json(s.at("means"));
        m.x_transform.sds = vector_from_json(s.at("sds"));
        m.x_transform.constant = s.at("constant").get<std::vector<bool>>();
        m.y_center = vector_from_json(j.at("y_center"));
        detail::require(m.x_transform.means.size() == m.beta_hat.cols() &&
                            m.x_transform.sds.size() == m.beta_hat.cols() &&
                            m.y_center.size() == m.beta_hat.rows(),
                        "model JSON has inconsistent dimensions");
        if (j.contains("Gamma_hat")) {
            EnvelopeFit f;
            f.u = m.u;
            f.lambda = m.lambda;
            f.beta_hat = m.beta_hat;
            f.Gamma_hat = matrix_from_json(j.at("Gamma_hat"));
            f.Omega_hat = matrix_from_json(j.at("Omega_hat"));
            f.Omega0_hat = matrix_from_json(j.at("Omega0_hat"));
            f.Gamma0_hat = linalg::complement_basis(f.Gamma_hat);
            f.Sigma_hat = f.Gamma_hat * f.Omega_hat * f.Gamma_hat.transpose() +
                          f.Gamma0_hat * f.Omega0_hat * f.Gamma0_hat.transpose();
            if (j.contains("diagnostics")) {
                const json& d = j["diagnostics"];
                f.diagnostics.objective_value = d.value("objective_value", 0.0);
                f.diagnostics.iterations = d.value("iterations", 0);
                f.diagnostics.projected_gradient_norm = d.value("projected_gradient_norm", 0.0);
                f.diagnostics.converged = d.value("converged", true);
            }
            f.diagnostics.G = f.Gamma_hat;
            m.fit = std::move(f);
        }
        return m;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed model JSON: ") + e.what());
    }
}

inline void save_model(const std::string& path, const FittedModel& m, const std::string& provenance = {})
{
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
    out << model_to_json(m, provenance).dump(2) << '\n';
}

inline FittedModel load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open '" + path + "' for reading");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
    return model_from_json(j);
}

} // namespace envelope::io
