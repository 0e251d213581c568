#ifndef CONJATLAS_CONFIG_HPP
#define CONJATLAS_CONFIG_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "conjatlas/boundary.hpp"
#include "conjatlas/locus.hpp"
#include "conjatlas/shooting.hpp"
#include "conjatlas/symmetry.hpp"

namespace conjatlas {

/// Config file errors: exit code 2 at the CLI; the message names the
/// offending key or line.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Value of the TOML subset used for experiment configs: strings, numbers,
/// booleans and (nested) arrays.
struct TomlValue {
    enum class Kind { string, number, boolean, array };
    Kind kind = Kind::number;
    std::string str;
    double num = 0.0;
    bool b = false;
    std::vector<TomlValue> array;
    int line = 0;
};

/// [table] sections of key = value pairs. Strict: unknown keys are rejected
/// when the config is interpreted.
struct TomlDocument {
    std::map<std::string, std::map<std::string, TomlValue>> tables;

    static TomlDocument parse(const std::string& text);
    static TomlDocument parse_file(const std::string& path);
};

struct ModelConfig {
    std::string kind;  // flat | graph_gaussian | ellipsoid | custom_polynomial
    int dim = 2;
    double amplitude = 1.0;
    double sigma = 1.0;
    double perturbation = 0.0;
    Vec semi_axes;
    std::vector<Monomial> x_monomials, y_monomials;
    std::optional<double> homogeneity_degree;

    HamiltonianModel build() const;
};

struct BoundaryConfig {
    std::string kind;  // dirichlet | neumann | robin | custom
    Vec x_star, X_star;
    Vec alpha0, beta0, alpha1, beta1;          // robin
    Mat near_A, near_B, far_A, far_B;          // custom (row-major in the file)
    Vec near_c, far_c;
    std::vector<int> mu_entries;

    SeparatedBoundary build() const;
};

struct SolveConfig {
    Vec u0;
    double tol = 1e-10;
    int max_iter = 50;
    bool multistart = false;
    double radius = 2.0;
    int count = 16;
    double dedup_tol = 1e-6;
};

struct SweepConfig {
    std::vector<SweepAxis> axes;
    double radius = 2.0;
    int count = 16;
    double tol = 1e-10;
    int max_iter = 50;
    double dedup_tol = 1e-6;
};

struct LocusConfig {
    Vec base;
    int grid = 256;
    double t_max = 6.0;
    double cusp_tol = 0.12;
    int n_theta = 24;
    int n_phi = 48;
    double t_tol = 1e-8;
};

struct ActionConfig {
    Mat exponents;
    double c = 1.0;
    double p = 2.0;

    ScalingAction build() const { return ScalingAction{exponents, c, p}; }
};

struct ExperimentConfig {
    ModelConfig model;
    IntegratorSpec integrator;
    std::optional<BoundaryConfig> boundary;
    SolveConfig solve;
    SweepConfig sweep;
    LocusConfig locus;
    std::optional<ActionConfig> action;
    int output_precision = 12;

    /// Parses and validates for the given command; throws ConfigError naming
    /// the offending key for unknown/missing/ill-typed entries.
    static ExperimentConfig load(const std::string& path, const std::string& command);
    static ExperimentConfig from_document(const TomlDocument& doc, const std::string& command);
};

}  // namespace conjatlas

#endif
