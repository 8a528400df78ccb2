// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "iotsched/baseline.hpp"
#include "iotsched/channel.hpp"
#include "iotsched/link_adaptation.hpp"
#include "iotsched/nn.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace iotsched {

enum class Algorithm { Dqn, Pgn, Ddpgn };
enum class ActionMode { Ia, Pa };
enum class RewardMode { Edge, Centralized };

std::string_view to_string(Algorithm a);
std::string_view to_string(ActionMode m);
std::string_view to_string(RewardMode m);
RewardMode reward_mode_from_string(std::string_view name);

/// Interference (IA) or transmit power (PA) range in dBm; discrete spaces use
/// `levels` equally spaced values including both ends.
struct ActionSpace {
    ActionMode mode = ActionMode::Ia;
    bool discrete = true;
    double lo_dbm = 0.0;
    double hi_dbm = 0.0;
    int levels = 10;

    double level_dbm(int k) const;
    /// lo + (hi - lo) u for u in [0, 1].
    double from_unit(double u) const;
};

ActionSpace make_action_space(ActionMode mode, bool discrete, Tech tech, const PhyParams& phy = {},
                              int levels = 10);

/// min(P_max, gamma_max (N0 + phi) / G), all linear.
double interference_to_power(double phi_w, double gain, double gamma_max, double noise_w, double pmax_w);
double interference_to_power(double phi_dbm, double gain, double gamma_max, const PhyParams& phy);

/// Floor used for the "no previous transmission" power in a state.
inline constexpr double kPowerFloorDbm = -60.0;

struct AgentState {
    std::vector<double> gain_ratios_db; // self first (0 dB), then co-channel devices in id order
    double prev_power_dbm = kPowerFloorDbm;
    double prev_rate = 0.0;
};

struct CriticState {
    std::vector<double> gains_db;
};

/// Co-channel set of `device` on its SC: the device itself, then the rest in id order.
std::vector<int> cochannel_order(const ScAssignment& assignment, int device);

/// Ratios G(j -> b) / G(i -> b) at timeslot t over the co-channel set; padded with
/// `kAbsentDb` up to `width` when the SC carries fewer devices.
AgentState build_state(const Realization& realization, const ScAssignment& assignment, int t,
                       int device, double prev_power_w, double prev_rate, int width);
CriticState build_critic_state(const Realization& realization, const ScAssignment& assignment, int t,
                               int device, int width);

inline constexpr double kAbsentDb = -200.0;

/// f(SINR) for every device under the given transmit powers.
std::vector<double> step_rates(const Realization& realization, const ScAssignment& assignment, int t,
                               std::span<const double> power_w, const McsCatalog& catalog,
                               const PhyParams& phy = {});

/// Edge: own rate. Centralized: sum of rates over the device's co-channel set.
std::vector<double> compute_reward(RewardMode mode, const ScAssignment& assignment,
                                   std::span<const double> rates);

/// Number of centralized reward evaluations since the last reset (instrumentation).
long centralized_reward_invocations();
void reset_reward_instrumentation();

struct DrlHyper {
    double eps_q = 0.2;
    int levels = 10;
    double lr_q = 1e-4;
    double lr_p = 1e-4;
    double lr_a = 1e-4;
    double lr_c = 1e-4;
    int minibatch = 500;        // N_D
    std::size_t replay_capacity = 500000; // B_D
    double ddpg_noise_std = 0.0; // on the unit action scale
    int warmup_realizations = 20;
};

struct DrlConfig {
    Algorithm algorithm = Algorithm::Ddpgn;
    ActionMode mode = ActionMode::Ia;
    RewardMode reward = RewardMode::Centralized;
    DrlHyper hyper;
    int num_cells = 7;
    int num_sc = 12;
    std::vector<Tech> techs{Tech::NbIot};
    std::uint64_t seed = 1;
};

/// Affine standardization frozen after fitting: (x - mean) / scale.
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> scale;

    static FeatureScaler fit(const std::vector<std::vector<double>>& rows);
    bool fitted() const { return !mean.empty(); }
    double apply(std::size_t k, double x) const { return (x - mean[k]) / scale[k]; }
};

struct Experience {
    Eigen::VectorXd state;
    int action = 0;
    double reward = 0.0;
    Eigen::VectorXd next_state;
};

/// Learner/actor for one (cell, technology).
struct DrlAgent {
    int cell = 0;
    Tech tech = Tech::NbIot;
    ActionSpace space;
    nn::MlpParams net; // Q, policy or actor
    nn::MlpParams best_net;
    nn::AdamState opt;
    nn::MlpParams critic;
    nn::MlpParams best_critic;
    nn::AdamState critic_opt;
    std::optional<nn::ReplayMemory<Experience>> replay;
    std::vector<double> reward_memory;
    double best_reward = 0.0;
    bool has_snapshot = false;
    long updates = 0;
    Rng rng;

    /// Parameters used for frozen execution: the best snapshot, or the current
    /// parameters when no snapshot was ever taken.
    const nn::MlpParams& policy() const { return has_snapshot ? best_net : net; }
    const nn::MlpParams& policy_critic() const { return has_snapshot ? best_critic : critic; }
};

/// What happened to one device in one timeslot.
struct DeviceStep {
    int device = 0;
    int action_index = -1; // discrete spaces only
    double action_dbm = 0.0;
    double power_w = 0.0;
    double rate = 0.0;
    double reward = 0.0;
    std::uint64_t state_hash = 0;
};

class DrlScheduler;

/// Drives one realization timeslot by timeslot. With a learner attached it trains
/// (exploration, per-timeslot updates, per-realization replay/snapshot in finish());
/// without, it executes the frozen policies greedily and each agent only sees its
/// own devices' gains and history.
class EpisodeRunner {
public:
    EpisodeRunner(const DrlScheduler& scheduler, DrlScheduler* learner, const Realization& realization,
                  const ScAssignment& assignment);

    bool done() const;
    const std::vector<DeviceStep>& step();
    void finish();
    /// Rates [t * devices + device] of the timeslots run so far.
    const std::vector<double>& rate_grid() const { return rates_; }
    int timeslot() const { return t_; }

private:
    Eigen::VectorXd actor_input(int device, int t) const;

    const DrlScheduler& sched_;
    DrlScheduler* learner_;
    const Realization& r_;
    const ScAssignment& a_;
    int t_ = 0;
    bool finished_ = false;
    std::vector<double> prev_power_;
    std::vector<double> prev_rate_;
    std::vector<double> rates_;
    std::vector<DeviceStep> steps_;
    std::vector<int> agent_of_;
};

class DrlScheduler {
public:
    DrlScheduler(DrlConfig config, McsCatalog catalog = default_mcs_catalog(), PhyParams phy = {});

    const DrlConfig& config() const { return config_; }
    const McsCatalog& catalog() const { return catalog_; }
    const PhyParams& phy() const { return phy_; }
    int state_width() const { return config_.num_cells; }
    int actor_input_dim() const { return state_width() + 2; }
    int critic_input_dim() const { return state_width() + 1; }

    std::vector<DrlAgent>& agents() { return agents_; }
    const std::vector<DrlAgent>& agents() const { return agents_; }
    /// Agent index for (cell, tech); throws ConfigError if absent.
    int agent_index(int cell, Tech tech) const;

    /// Fit the input standardization from gains of a warmup set (no learning).
    void fit_scalers(std::span<const Realization> realizations, std::span<const ScAssignment> assignments);
    const FeatureScaler& actor_scaler() const { return actor_scaler_; }
    const FeatureScaler& critic_scaler() const { return critic_scaler_; }

    /// One training realization; returns its rate grid.
    std::vector<double> train(const Realization& realization, const ScAssignment& assignment);
    /// Frozen distributed execution; returns the rate grid. Thread-safe.
    std::vector<double> evaluate(const Realization& realization, const ScAssignment& assignment) const;

    /// Standardized actor features.
    Eigen::VectorXd actor_features(const AgentState& state, Tech tech) const;
    Eigen::VectorXd critic_features(const CriticState& state, double unit_action) const;

    void save(const std::filesystem::path& dir) const;
    void load(const std::filesystem::path& dir);

    /// Optional CSV stream for training traces: omega,t,device,state_hash,action_dbm,power_dbm,rate,reward.
    void set_trace(std::ostream* out) { trace_ = out; }
    long realizations_trained() const { return realizations_trained_; }

private:
    friend class EpisodeRunner;

    DrlConfig config_;
    McsCatalog catalog_;
    PhyParams phy_;
    std::vector<DrlAgent> agents_;
    FeatureScaler actor_scaler_;
    FeatureScaler critic_scaler_;
    std::ostream* trace_ = nullptr;
    long realizations_trained_ = 0;
};

/// Learning rules, one column per sample. Each returns the gradient the trainer
/// feeds to Adam together with the value it differentiates.
struct RuleGradient {
    double value = 0.0;
    nn::Gradients grads;
};
/// DQN regression (d = 0): loss = (1/2m) sum (Q(s, a) - r)^2.
RuleGradient dqn_rule(const nn::MlpParams& q, const Eigen::MatrixXd& states, std::span<const int> actions,
                      std::span<const double> rewards);
/// REINFORCE: objective = (1/m) sum r log softmax(pi(s))[a]; ascend.
RuleGradient pgn_rule(const nn::MlpParams& policy, const Eigen::MatrixXd& states, std::span<const int> actions,
                      std::span<const double> rewards);
/// Critic regression: loss = (1/2m) sum (Q_C(x) - r)^2.
RuleGradient critic_rule(const nn::MlpParams& critic, const Eigen::MatrixXd& inputs,
                         std::span<const double> rewards);
/// Deterministic policy gain: objective = (1/m) sum Q_C([c; 2 sigmoid(pi_A(s)) - 1])
/// with critic parameters held constant; gradient w.r.t. the actor only.
/// `critic_gains` holds the critic features without the action row.
RuleGradient actor_rule(const nn::MlpParams& actor, const nn::MlpParams& critic, const Eigen::MatrixXd& states,
                        const Eigen::MatrixXd& critic_gains);

/// Greedy index with ties to the lowest index.
int argmax_lowest(const Eigen::VectorXd& v);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double sigmoid(double z);

} // namespace iotsched
