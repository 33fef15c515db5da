#pragma once

#include <cmath>
#include <complex>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "beamdelay/dde.hpp"
#include "beamdelay/params.hpp"
#include "beamdelay/pole_placement.hpp"

namespace beamdelay {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Named parametric signal families; configs stay declarative (no expression
// parsing), which covers all the shipped scenarios.
struct DelayConfig {
    std::string form = "sinusoidal";  // constant | sinusoidal
    double value = 0.12;              // constant form
    double offset = 0.12;             // sinusoidal: offset + amplitude*sin(2 pi f t)
    double amplitude = 0.1;
    double frequency = 3.0;

    DelaySignal build() const {
        if (form == "constant") {
            if (!(value > 0.0)) throw ConfigError("delay.value must be > 0");
            return DelaySignal::constant(value);
        }
        if (form == "sinusoidal") {
            if (!(offset > std::abs(amplitude)))
                throw ConfigError("delay: need offset > |amplitude| so h(t) stays positive");
            const double off = offset, amp = amplitude, f = frequency;
            return DelaySignal{offset - std::abs(amplitude), offset + std::abs(amplitude),
                               [off, amp, f](double t) { return off + amp * std::sin(2.0 * pi * f * t); }};
        }
        throw ConfigError("delay.form must be 'constant' or 'sinusoidal'");
    }
};

// d_d(t,x) = amp * exp(-decay (t-center)^2) * (spatial_offset + cos(2 pi spatial_freq x))
// d_b1(t)  = b1_amp * cos(2 pi b1_freq t) * exp(-decay (t-center)^2)
// d_b2(t)  = b2_amp * sin(2 pi b2_freq t) * exp(-decay (t-center)^2)
struct DisturbanceConfig {
    std::string form = "none";  // none | gaussian-pulse-modulated
    double amp = 3.0;
    double decay = 2.0;
    double center = 5.0;
    double spatial_offset = 2.0;
    double spatial_freq = 1.0;
    double b1_amp = 1.0;
    double b1_freq = 1.0;
    double b2_amp = -1.0;
    double b2_freq = 1.5;

    DisturbanceSpec build() const {
        if (form == "none") return DisturbanceSpec::none();
        if (form == "gaussian-pulse-modulated") {
            const auto c = *this;
            return DisturbanceSpec{
                [c](double t, double x) {
                    return c.amp * std::exp(-c.decay * (t - c.center) * (t - c.center)) *
                           (c.spatial_offset + std::cos(2.0 * pi * c.spatial_freq * x));
                },
                [c](double t) {
                    const double env = std::exp(-c.decay * (t - c.center) * (t - c.center));
                    return Eigen::Vector2d(c.b1_amp * std::cos(2.0 * pi * c.b1_freq * t) * env,
                                           c.b2_amp * std::sin(2.0 * pi * c.b2_freq * t) * env);
                }};
        }
        throw ConfigError("disturbance.form must be 'none' or 'gaussian-pulse-modulated'");
    }
};

// Initial profiles as (polynomial in tau) x (polynomial in x, optionally
// modulated by sin(k pi x)); covers the shipped scenario exactly.
struct ProfileConfig {
    std::vector<double> time_poly{1.0};   // sum_i a_i tau^i
    std::vector<double> space_poly{0.0};  // sum_j b_j x^j
    int sine_k = 0;                       // 0: no sine factor, else * sin(k pi x)

    double eval(double tau, double x) const {
        double pt = 0.0;
        for (std::size_t i = time_poly.size(); i-- > 0;) pt = pt * tau + time_poly[i];
        double px = 0.0;
        for (std::size_t j = space_poly.size(); j-- > 0;) px = px * x + space_poly[j];
        if (sine_k > 0) px *= std::sin(sine_k * pi * x);
        return pt * px;
    }

    double eval_tau_derivative(double tau, double x) const {
        double pt = 0.0;
        for (std::size_t i = time_poly.size(); i-- > 1;)
            pt = pt * tau + static_cast<double>(i) * time_poly[i];
        double px = 0.0;
        for (std::size_t j = space_poly.size(); j-- > 0;) px = px * x + space_poly[j];
        if (sine_k > 0) px *= std::sin(sine_k * pi * x);
        return pt * px;
    }
};

struct ScenarioConfig {
    std::string name = "custom";
    BeamParams params{1.5, 50.0, 50.0};
    int N0 = 2;
    int N_sim = 12;
    Actuation actuation = Actuation::BothEnds;
    std::vector<std::complex<double>> poles{{-5, 0}, {-6, 0}, {-7, 0}, {-8, 0}};
    bool open_loop = false;
    DelayConfig delay;
    DisturbanceConfig disturbance;
    ProfileConfig y0;
    ProfileConfig yt0;
    double dt = 1e-4;
    double T = 20.0;
    int x_grid_size = 41;
    double resolution = 0.001;  // h_M / kappa grid resolution
    int quad_nodes = 64;

    void validate() const {
        try {
            params.validate();
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        if (N0 < 0) throw ConfigError("N0 must be >= 0");
        if (N_sim < std::max(1, N0)) throw ConfigError("N_sim must be >= max(1, N0)");
        if (!open_loop && static_cast<int>(poles.size()) != 2 * N0)
            throw ConfigError("need exactly 2*N0 target poles");
        if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
        if (!(T > 0.0)) throw ConfigError("T must be > 0");
        if (x_grid_size < 2) throw ConfigError("x_grid_size must be >= 2");
        if (!(resolution > 0.0)) throw ConfigError("resolution must be > 0");
        if (quad_nodes < 64) throw ConfigError("quad_nodes must be >= 64");
        delay.build();  // range checks
        disturbance.build();
    }

    InitialHistory initial_history() const {
        const ProfileConfig a = y0, b = yt0;
        return InitialHistory{
            [a](double tau, double x) { return a.eval(tau, x); },
            [b](double tau, double x) { return b.eval(tau, x); },
            [a](double tau, double x) { return a.eval_tau_derivative(tau, x); },
            [b](double tau, double x) { return b.eval_tau_derivative(tau, x); }};
    }

    std::vector<double> x_grid() const {
        std::vector<double> g(x_grid_size);
        for (int i = 0; i < x_grid_size; ++i)
            g[i] = static_cast<double>(i) / (x_grid_size - 1);
        return g;
    }
};

namespace detail {

inline void read_poly(const nlohmann::json& j, const char* key, std::vector<double>& out) {
    if (j.contains(key)) out = j.at(key).get<std::vector<double>>();
}

}  // namespace detail

// The shipped scenario family: a beam with alpha = 1.5, beta0 = 50, gamma = 50,
// four target poles {-5,-6,-7,-8}, sinusoidal delay 0.12 + 0.1 sin(6 pi t),
// Gaussian-pulse disturbances centered at t = 5, and polynomial/sine initial
// profiles. Variants: closed loop (default), open loop, and a slow
// full-resolution 40-mode run.
inline ScenarioConfig preset(const std::string& name) {
    ScenarioConfig c;
    c.name = name;
    c.y0.time_poly = {1.0, -2.0, 1.0};     // (1 - tau)^2
    c.y0.space_poly = {0.0, 2.0, -2.0};    // 2 x (1 - x)
    c.yt0.time_poly = {-1.0, 2.0, -1.0};   // -(1 - tau)^2
    c.yt0.space_poly = {1.0, 2.0};         // (1 + 2x)
    c.yt0.sine_k = 4;                      // * sin(4 pi x)
    c.disturbance.form = "gaussian-pulse-modulated";
    if (name == "paper-sec6" || name == "paper-sec6-closedloop") return c;
    if (name == "paper-sec6-openloop") {
        c.open_loop = true;
        c.disturbance.form = "none";
        c.T = 10.0;
        return c;
    }
    if (name == "paper-sec6-full") {  // slow full-fidelity run
        c.N_sim = 40;
        c.dt = 1e-5;
        return c;
    }
    throw ConfigError("unknown preset '" + name +
                      "' (available: paper-sec6, paper-sec6-closedloop, "
                      "paper-sec6-openloop, paper-sec6-full)");
}

inline ScenarioConfig parse_config(const nlohmann::json& j) {
    ScenarioConfig c = j.contains("preset") ? preset(j.at("preset").get<std::string>())
                                            : ScenarioConfig{};
    try {
        if (j.contains("name")) c.name = j.at("name").get<std::string>();
        if (j.contains("alpha")) c.params.alpha = j.at("alpha").get<double>();
        if (j.contains("beta0")) c.params.beta0 = j.at("beta0").get<double>();
        if (j.contains("gamma")) c.params.gamma = j.at("gamma").get<double>();
        if (j.contains("N0")) c.N0 = j.at("N0").get<int>();
        if (j.contains("N_sim")) c.N_sim = j.at("N_sim").get<int>();
        if (j.contains("open_loop")) c.open_loop = j.at("open_loop").get<bool>();
        if (j.contains("dt")) c.dt = j.at("dt").get<double>();
        if (j.contains("T")) c.T = j.at("T").get<double>();
        if (j.contains("x_grid_size")) c.x_grid_size = j.at("x_grid_size").get<int>();
        if (j.contains("resolution")) c.resolution = j.at("resolution").get<double>();
        if (j.contains("quad_nodes")) c.quad_nodes = j.at("quad_nodes").get<int>();
        if (j.contains("actuation")) {
            const std::string a = j.at("actuation").get<std::string>();
            if (a == "left") c.actuation = Actuation::LeftOnly;
            else if (a == "right") c.actuation = Actuation::RightOnly;
            else if (a == "both") c.actuation = Actuation::BothEnds;
            else throw ConfigError("actuation must be left, right or both");
        }
        if (j.contains("poles")) {
            c.poles.clear();
            for (const auto& p : j.at("poles")) {
                if (p.is_number()) c.poles.emplace_back(p.get<double>(), 0.0);
                else c.poles.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
            }
        }
        if (j.contains("delay")) {
            const auto& d = j.at("delay");
            if (d.contains("form")) c.delay.form = d.at("form").get<std::string>();
            if (d.contains("value")) c.delay.value = d.at("value").get<double>();
            if (d.contains("offset")) c.delay.offset = d.at("offset").get<double>();
            if (d.contains("amplitude")) c.delay.amplitude = d.at("amplitude").get<double>();
            if (d.contains("frequency")) c.delay.frequency = d.at("frequency").get<double>();
        }
        if (j.contains("disturbance")) {
            const auto& d = j.at("disturbance");
            if (d.contains("form")) c.disturbance.form = d.at("form").get<std::string>();
            if (d.contains("amp")) c.disturbance.amp = d.at("amp").get<double>();
            if (d.contains("decay")) c.disturbance.decay = d.at("decay").get<double>();
            if (d.contains("center")) c.disturbance.center = d.at("center").get<double>();
            if (d.contains("spatial_offset"))
                c.disturbance.spatial_offset = d.at("spatial_offset").get<double>();
            if (d.contains("spatial_freq"))
                c.disturbance.spatial_freq = d.at("spatial_freq").get<double>();
            if (d.contains("b1_amp")) c.disturbance.b1_amp = d.at("b1_amp").get<double>();
            if (d.contains("b1_freq")) c.disturbance.b1_freq = d.at("b1_freq").get<double>();
            if (d.contains("b2_amp")) c.disturbance.b2_amp = d.at("b2_amp").get<double>();
            if (d.contains("b2_freq")) c.disturbance.b2_freq = d.at("b2_freq").get<double>();
        }
        if (j.contains("y0")) {
            const auto& p = j.at("y0");
            detail::read_poly(p, "time_poly", c.y0.time_poly);
            detail::read_poly(p, "space_poly", c.y0.space_poly);
            if (p.contains("sine_k")) c.y0.sine_k = p.at("sine_k").get<int>();
        }
        if (j.contains("yt0")) {
            const auto& p = j.at("yt0");
            detail::read_poly(p, "time_poly", c.yt0.time_poly);
            detail::read_poly(p, "space_poly", c.yt0.space_poly);
            if (p.contains("sine_k")) c.yt0.sine_k = p.at("sine_k").get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    c.validate();
    return c;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

}  // namespace beamdelay
