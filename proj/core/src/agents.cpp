// SPDX-License-Identifier: Apache-2.0
#include "iotsched/agents.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace iotsched {

namespace {

std::atomic<long> g_centralized_calls{0};

constexpr double kAbsentFeature = -10.0;

std::uint64_t hash_features(const Eigen::VectorXd& x)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const auto bits = std::bit_cast<std::uint64_t>(x[k]);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

nlohmann::json scaler_to_json(const FeatureScaler& s) { return {{"mean", s.mean}, {"scale", s.scale}}; }

FeatureScaler scaler_from_json(const nlohmann::json& j)
{
    FeatureScaler s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.scale = j.at("scale").get<std::vector<double>>();
    return s;
}

void snapshot(DrlAgent& agent, double reward)
{
    agent.best_net = agent.net;
    agent.best_critic = agent.critic;
    agent.best_reward = reward;
    agent.has_snapshot = true;
}

} // namespace

std::string_view to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::Dqn:
        return "dqn";
    case Algorithm::Pgn:
        return "pgn";
    case Algorithm::Ddpgn:
        return "ddpgn";
    }
    return "unknown";
}

std::string_view to_string(ActionMode m) { return m == ActionMode::Ia ? "ia" : "pa"; }

std::string_view to_string(RewardMode m) { return m == RewardMode::Edge ? "edge" : "centralized"; }

RewardMode reward_mode_from_string(std::string_view name)
{
    if (name == "edge") {
        return RewardMode::Edge;
    }
    if (name == "centralized") {
        return RewardMode::Centralized;
    }
    throw ConfigError("unknown reward mode '" + std::string(name) + "'");
}

double ActionSpace::level_dbm(int k) const
{
    if (k < 0 || k >= levels) {
        throw ContractViolation("action index out of range");
    }
    if (levels == 1) {
        return lo_dbm;
    }
    return lo_dbm + (hi_dbm - lo_dbm) * static_cast<double>(k) / (levels - 1);
}

double ActionSpace::from_unit(double u) const { return lo_dbm + (hi_dbm - lo_dbm) * u; }

ActionSpace make_action_space(ActionMode mode, bool discrete, Tech tech, const PhyParams& phy, int levels)
{
    if (levels < 2) {
        throw ConfigError("a discrete action space needs at least two levels");
    }
    ActionSpace s;
    s.mode = mode;
    s.discrete = discrete;
    s.levels = levels;
    if (mode == ActionMode::Ia) {
        const TechParams tp = tech_params(tech);
        s.lo_dbm = tp.phi_min_dbm;
        s.hi_dbm = tp.phi_max_dbm;
    } else {
        s.lo_dbm = phy.pmin_dbm;
        s.hi_dbm = phy.pmax_dbm;
    }
    return s;
}

double interference_to_power(double phi_w, double gain, double gamma_max, double noise_w, double pmax_w)
{
    if (!(gain > 0.0)) {
        throw ContractViolation("interference allocation needs a positive gain");
    }
    return std::min(pmax_w, gamma_max * (noise_w + phi_w) / gain);
}

double interference_to_power(double phi_dbm, double gain, double gamma_max, const PhyParams& phy)
{
    return interference_to_power(dbm_to_watts(phi_dbm), gain, gamma_max, phy.noise_w(), phy.pmax_w());
}

std::vector<int> cochannel_order(const ScAssignment& a, int device)
{
    const int s = a.sc.at(static_cast<std::size_t>(device));
    std::vector<int> out{device};
    for (std::size_t j = 0; j < a.sc.size(); ++j) {
        if (static_cast<int>(j) != device && a.sc[j] == s) {
            out.push_back(static_cast<int>(j));
        }
    }
    return out;
}

AgentState build_state(const Realization& r, const ScAssignment& a, int t, int device,
                       double prev_power_w, double prev_rate, int width)
{
    const auto set = cochannel_order(a, device);
    const int site = r.devices[static_cast<std::size_t>(device)].cell_id;
    const double own = r.gain(t, device, site);
    AgentState s;
    for (int j : set) {
        s.gain_ratios_db.push_back(linear_to_db(r.gain(t, j, site) / own));
    }
    if (static_cast<int>(s.gain_ratios_db.size()) > width) {
        throw ConfigError("co-channel set wider than the state");
    }
    s.gain_ratios_db.resize(static_cast<std::size_t>(width), kAbsentDb);
    s.prev_power_dbm =
        prev_power_w > 0.0 ? std::max(kPowerFloorDbm, watts_to_dbm(prev_power_w)) : kPowerFloorDbm;
    s.prev_rate = prev_rate;
    return s;
}

CriticState build_critic_state(const Realization& r, const ScAssignment& a, int t, int device, int width)
{
    const auto set = cochannel_order(a, device);
    const int site = r.devices[static_cast<std::size_t>(device)].cell_id;
    CriticState s;
    for (int j : set) {
        s.gains_db.push_back(linear_to_db(r.gain(t, j, site)));
    }
    if (static_cast<int>(s.gains_db.size()) > width) {
        throw ConfigError("co-channel set wider than the critic state");
    }
    s.gains_db.resize(static_cast<std::size_t>(width), kAbsentDb);
    return s;
}

std::vector<double> step_rates(const Realization& r, const ScAssignment& a, int t,
                               std::span<const double> power_w, const McsCatalog& catalog,
                               const PhyParams& phy)
{
    std::vector<double> sinr(r.devices.size());
    sinr_on_assignment(r, a.sc, power_w, t, phy.noise_w(), sinr);
    std::vector<double> rates(r.devices.size());
    for (std::size_t i = 0; i < r.devices.size(); ++i) {
        rates[i] = discrete_rate_f(sinr[i], catalog.at(r.devices[i].tech));
    }
    return rates;
}

std::vector<double> compute_reward(RewardMode mode, const ScAssignment& a, std::span<const double> rates)
{
    if (mode == RewardMode::Edge) {
        return {rates.begin(), rates.end()};
    }
    g_centralized_calls.fetch_add(1, std::memory_order_relaxed);
    std::vector<double> per_sc(static_cast<std::size_t>(a.num_sc), 0.0);
    for (std::size_t i = 0; i < rates.size(); ++i) {
        if (a.sc[i] >= 0) {
            per_sc[static_cast<std::size_t>(a.sc[i])] += rates[i];
        }
    }
    std::vector<double> out(rates.size(), 0.0);
    for (std::size_t i = 0; i < rates.size(); ++i) {
        out[i] = a.sc[i] >= 0 ? per_sc[static_cast<std::size_t>(a.sc[i])] : rates[i];
    }
    return out;
}

long centralized_reward_invocations() { return g_centralized_calls.load(); }
void reset_reward_instrumentation() { g_centralized_calls.store(0); }

int argmax_lowest(const Eigen::VectorXd& v)
{
    int best = 0;
    for (Eigen::Index k = 1; k < v.size(); ++k) {
        if (v[k] > v[best]) {
            best = static_cast<int>(k);
        }
    }
    return best;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits)
{
    const double m = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - m).exp();
    return e / e.sum();
}

double sigmoid(double z)
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

FeatureScaler FeatureScaler::fit(const std::vector<std::vector<double>>& rows)
{
    FeatureScaler s;
    if (rows.empty()) {
        throw ConfigError("cannot fit a feature scaler without samples");
    }
    const std::size_t w = rows.front().size();
    s.mean.assign(w, 0.0);
    s.scale.assign(w, 1.0);
    for (std::size_t k = 0; k < w; ++k) {
        double sum = 0.0;
        double sq = 0.0;
        long count = 0;
        for (const auto& row : rows) {
            if (row[k] == kAbsentDb) {
                continue;
            }
            sum += row[k];
            sq += row[k] * row[k];
            ++count;
        }
        if (count == 0) {
            continue;
        }
        const double mean = sum / static_cast<double>(count);
        const double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
        s.mean[k] = mean;
        const double sd = std::sqrt(var);
        s.scale[k] = sd > 1e-9 ? sd : 1.0;
    }
    return s;
}

// ---- scheduler ----------------------------------------------------------

DrlScheduler::DrlScheduler(DrlConfig config, McsCatalog catalog, PhyParams phy)
    : config_(std::move(config)), catalog_(std::move(catalog)), phy_(phy)
{
    if (config_.num_cells < 1 || config_.num_sc < 1 || config_.techs.empty()) {
        throw ConfigError("scheduler needs cells, SCs and at least one technology");
    }
    if (config_.hyper.minibatch < 1) {
        throw ConfigError("minibatch size must be positive");
    }
    const bool discrete = config_.algorithm != Algorithm::Ddpgn;
    int k = 0;
    for (int cell = 0; cell < config_.num_cells; ++cell) {
        for (Tech tech : config_.techs) {
            DrlAgent agent;
            agent.cell = cell;
            agent.tech = tech;
            agent.space = make_action_space(config_.mode, discrete, tech, phy_, config_.hyper.levels);
            Rng init(derive_seed(config_.seed, 2000 + static_cast<std::uint64_t>(k)));
            agent.rng.seed(derive_seed(config_.seed, 1000 + static_cast<std::uint64_t>(k)));
            switch (config_.algorithm) {
            case Algorithm::Dqn:
                agent.net = nn::MlpParams::glorot(nn::standard_dims(actor_input_dim(), config_.hyper.levels), init);
                agent.opt = nn::AdamState::for_params(agent.net, config_.hyper.lr_q);
                agent.replay.emplace(config_.hyper.replay_capacity);
                break;
            case Algorithm::Pgn:
                agent.net = nn::MlpParams::glorot(nn::standard_dims(actor_input_dim(), config_.hyper.levels), init);
                agent.opt = nn::AdamState::for_params(agent.net, config_.hyper.lr_p);
                break;
            case Algorithm::Ddpgn:
                agent.net = nn::MlpParams::glorot(nn::standard_dims(actor_input_dim(), 1), init);
                agent.opt = nn::AdamState::for_params(agent.net, config_.hyper.lr_a);
                agent.critic = nn::MlpParams::glorot(nn::standard_dims(critic_input_dim(), 1), init);
                agent.critic_opt = nn::AdamState::for_params(agent.critic, config_.hyper.lr_c);
                break;
            }
            agents_.push_back(std::move(agent));
            ++k;
        }
    }
}

int DrlScheduler::agent_index(int cell, Tech tech) const
{
    for (std::size_t k = 0; k < agents_.size(); ++k) {
        if (agents_[k].cell == cell && agents_[k].tech == tech) {
            return static_cast<int>(k);
        }
    }
    throw ConfigError("no agent for cell " + std::to_string(cell) + " and technology " +
                      std::string(to_string(tech)));
}

void DrlScheduler::fit_scalers(std::span<const Realization> realizations,
                               std::span<const ScAssignment> assignments)
{
    std::vector<std::vector<double>> ratios;
    std::vector<std::vector<double>> gains;
    const std::size_t count =
        std::min<std::size_t>(realizations.size(), static_cast<std::size_t>(config_.hyper.warmup_realizations));
    for (std::size_t w = 0; w < count; ++w) {
        const auto& r = realizations[w];
        const auto& a = assignments[w];
        for (int t = 0; t < r.timeslots; ++t) {
            for (int i = 0; i < r.num_devices(); ++i) {
                ratios.push_back(build_state(r, a, t, i, 0.0, 0.0, state_width()).gain_ratios_db);
                gains.push_back(build_critic_state(r, a, t, i, state_width()).gains_db);
            }
        }
    }
    actor_scaler_ = FeatureScaler::fit(ratios);
    critic_scaler_ = FeatureScaler::fit(gains);
}

Eigen::VectorXd DrlScheduler::actor_features(const AgentState& s, Tech tech) const
{
    if (!actor_scaler_.fitted()) {
        throw ContractViolation("feature scaler used before fitting");
    }
    const int w = state_width();
    Eigen::VectorXd x(w + 2);
    for (int k = 0; k < w; ++k) {
        const double v = s.gain_ratios_db[static_cast<std::size_t>(k)];
        x[k] = v == kAbsentDb ? kAbsentFeature : actor_scaler_.apply(static_cast<std::size_t>(k), v);
    }
    x[w] = 2.0 * (s.prev_power_dbm - kPowerFloorDbm) / (phy_.pmax_dbm - kPowerFloorDbm) - 1.0;
    x[w + 1] = s.prev_rate / catalog_.at(tech).beta_max();
    return x;
}

Eigen::VectorXd DrlScheduler::critic_features(const CriticState& s, double unit_action) const
{
    if (!critic_scaler_.fitted()) {
        throw ContractViolation("feature scaler used before fitting");
    }
    const int w = state_width();
    Eigen::VectorXd x(w + 1);
    for (int k = 0; k < w; ++k) {
        const double v = s.gains_db[static_cast<std::size_t>(k)];
        x[k] = v == kAbsentDb ? kAbsentFeature : critic_scaler_.apply(static_cast<std::size_t>(k), v);
    }
    x[w] = 2.0 * unit_action - 1.0;
    return x;
}

std::vector<double> DrlScheduler::train(const Realization& r, const ScAssignment& a)
{
    EpisodeRunner run(*this, this, r, a);
    while (!run.done()) {
        run.step();
    }
    run.finish();
    return run.rate_grid();
}

std::vector<double> DrlScheduler::evaluate(const Realization& r, const ScAssignment& a) const
{
    EpisodeRunner run(*this, nullptr, r, a);
    while (!run.done()) {
        run.step();
    }
    return run.rate_grid();
}

void DrlScheduler::save(const std::filesystem::path& dir) const
{
    std::filesystem::create_directories(dir);
    for (std::size_t k = 0; k < agents_.size(); ++k) {
        const auto& ag = agents_[k];
        nlohmann::json meta = {{"algorithm", std::string(to_string(config_.algorithm))},
                               {"mode", std::string(to_string(config_.mode))},
                               {"cell", ag.cell},
                               {"tech", std::string(to_string(ag.tech))},
                               {"best_reward", ag.best_reward},
                               {"has_snapshot", ag.has_snapshot},
                               {"actor_scaler", scaler_to_json(actor_scaler_)},
                               {"critic_scaler", scaler_to_json(critic_scaler_)}};
        const std::string stem = "agent_" + std::to_string(k);
        nn::save_params(dir / (stem + "_net.nnp"), ag.policy(), meta);
        if (config_.algorithm == Algorithm::Ddpgn) {
            nn::save_params(dir / (stem + "_critic.nnp"), ag.policy_critic(), meta);
        }
    }
}

void DrlScheduler::load(const std::filesystem::path& dir)
{
    for (std::size_t k = 0; k < agents_.size(); ++k) {
        auto& ag = agents_[k];
        const std::string stem = "agent_" + std::to_string(k);
        nlohmann::json meta;
        nn::MlpParams net = nn::load_params(dir / (stem + "_net.nnp"), &meta);
        if (net.dims != ag.net.dims || meta.at("cell").get<int>() != ag.cell ||
            meta.at("algorithm").get<std::string>() != to_string(config_.algorithm)) {
            throw ConfigError("checkpoint " + stem + " does not match the scheduler configuration");
        }
        ag.net = net;
        ag.best_net = std::move(net);
        if (config_.algorithm == Algorithm::Ddpgn) {
            ag.critic = nn::load_params(dir / (stem + "_critic.nnp"));
            ag.best_critic = ag.critic;
        }
        ag.best_reward = meta.value("best_reward", 0.0);
        ag.has_snapshot = true;
        actor_scaler_ = scaler_from_json(meta.at("actor_scaler"));
        critic_scaler_ = scaler_from_json(meta.at("critic_scaler"));
    }
}

// ---- episode ------------------------------------------------------------

EpisodeRunner::EpisodeRunner(const DrlScheduler& scheduler, DrlScheduler* learner, const Realization& r,
                             const ScAssignment& a)
    : sched_(scheduler), learner_(learner), r_(r), a_(a)
{
    const auto n = static_cast<std::size_t>(r.num_devices());
    if (a.sc.size() != n) {
        throw ConfigError("assignment does not match the realization");
    }
    prev_power_.assign(n, 0.0);
    prev_rate_.assign(n, 0.0);
    agent_of_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        agent_of_[i] = scheduler.agent_index(r.devices[i].cell_id, r.devices[i].tech);
    }
    rates_.reserve(n * static_cast<std::size_t>(r.timeslots));
}

bool EpisodeRunner::done() const { return t_ >= r_.timeslots; }

Eigen::VectorXd EpisodeRunner::actor_input(int device, int t) const
{
    const auto i = static_cast<std::size_t>(device);
    const AgentState s =
        build_state(r_, a_, t, device, prev_power_[i], prev_rate_[i], sched_.state_width());
    return sched_.actor_features(s, r_.devices[i].tech);
}

const std::vector<DeviceStep>& EpisodeRunner::step()
{
    if (done()) {
        throw ContractViolation("episode already finished");
    }
    const int t = t_;
    const int n = r_.num_devices();
    const auto& cfg = sched_.config();
    const auto& phy = sched_.phy();
    const bool training = learner_ != nullptr;
    const auto& agents = sched_.agents();

    std::vector<bool> explore(agents.size(), false);
    if (training && cfg.algorithm == Algorithm::Dqn) {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t k = 0; k < agents.size(); ++k) {
            explore[k] = unit(learner_->agents_[k].rng) < cfg.hyper.eps_q;
        }
    }

    std::vector<Eigen::VectorXd> features(static_cast<std::size_t>(n));
    std::vector<double> unit_action(static_cast<std::size_t>(n), 0.0);
    std::vector<double> power(static_cast<std::size_t>(n), 0.0);
    steps_.assign(static_cast<std::size_t>(n), DeviceStep{});

    for (int i = 0; i < n; ++i) {
        const auto q = static_cast<std::size_t>(i);
        const std::size_t k = static_cast<std::size_t>(agent_of_[q]);
        const DrlAgent& ag = agents[k];
        const nn::MlpParams& params = training ? ag.net : ag.policy();
        features[q] = actor_input(i, t);
        DeviceStep& st = steps_[q];
        st.device = i;
        st.state_hash = hash_features(features[q]);
        const Eigen::VectorXd out = nn::forward(params, features[q]);

        switch (cfg.algorithm) {
        case Algorithm::Dqn: {
            int action = argmax_lowest(out);
            if (explore[k]) {
                std::uniform_int_distribution<int> pick(0, ag.space.levels - 1);
                action = pick(learner_->agents_[k].rng);
            }
            st.action_index = action;
            st.action_dbm = ag.space.level_dbm(action);
            break;
        }
        case Algorithm::Pgn: {
            const Eigen::VectorXd pi = softmax(out);
            int action = argmax_lowest(pi);
            if (training) {
                std::uniform_real_distribution<double> unit(0.0, 1.0);
                double u = unit(learner_->agents_[k].rng);
                action = static_cast<int>(pi.size()) - 1;
                for (Eigen::Index m = 0; m < pi.size(); ++m) {
                    u -= pi[m];
                    if (u < 0.0) {
                        action = static_cast<int>(m);
                        break;
                    }
                }
            }
            st.action_index = action;
            st.action_dbm = ag.space.level_dbm(action);
            break;
        }
        case Algorithm::Ddpgn: {
            double u = sigmoid(out[0]);
            if (training && cfg.hyper.ddpg_noise_std > 0.0) {
                std::normal_distribution<double> noise(0.0, cfg.hyper.ddpg_noise_std);
                u = std::clamp(u + noise(learner_->agents_[k].rng), 0.0, 1.0);
            }
            unit_action[q] = u;
            st.action_dbm = ag.space.from_unit(u);
            break;
        }
        }

        if (ag.space.mode == ActionMode::Ia) {
            const double gmax = sched_.catalog().at(r_.devices[q].tech).gamma_max;
            power[q] = interference_to_power(dbm_to_watts(st.action_dbm), r_.serving_gain(t, i), gmax,
                                             phy.noise_w(), phy.pmax_w());
        } else {
            power[q] = std::min(phy.pmax_w(), dbm_to_watts(st.action_dbm));
        }
        st.power_w = power[q];
    }

    const auto rates = step_rates(r_, a_, t, power, sched_.catalog(), phy);
    const auto rewards = compute_reward(training ? cfg.reward : RewardMode::Edge, a_, rates);
    for (int i = 0; i < n; ++i) {
        steps_[static_cast<std::size_t>(i)].rate = rates[static_cast<std::size_t>(i)];
        steps_[static_cast<std::size_t>(i)].reward = rewards[static_cast<std::size_t>(i)];
    }

    if (training) {
        auto& lagents = learner_->agents_;
        const int next_t = std::min(t + 1, r_.timeslots - 1);
        switch (cfg.algorithm) {
        case Algorithm::Dqn:
            for (int i = 0; i < n; ++i) {
                const auto q = static_cast<std::size_t>(i);
                const AgentState next =
                    build_state(r_, a_, next_t, i, power[q], rates[q], sched_.state_width());
                lagents[static_cast<std::size_t>(agent_of_[q])].replay->insert(
                    {features[q], steps_[q].action_index, rewards[q],
                     sched_.actor_features(next, r_.devices[q].tech)});
            }
            break;
        case Algorithm::Pgn:
        case Algorithm::Ddpgn:
            for (std::size_t k = 0; k < lagents.size(); ++k) {
                std::vector<int> mine;
                for (int i = 0; i < n; ++i) {
                    if (agent_of_[static_cast<std::size_t>(i)] == static_cast<int>(k)) {
                        mine.push_back(i);
                    }
                }
                if (mine.empty()) {
                    continue;
                }
                DrlAgent& ag = lagents[k];
                const auto m = static_cast<Eigen::Index>(mine.size());
                Eigen::MatrixXd x(sched_.actor_input_dim(), m);
                for (Eigen::Index c = 0; c < m; ++c) {
                    x.col(c) = features[static_cast<std::size_t>(mine[static_cast<std::size_t>(c)])];
                }
                std::vector<int> actions;
                std::vector<double> own_rewards;
                for (int i : mine) {
                    actions.push_back(steps_[static_cast<std::size_t>(i)].action_index);
                    own_rewards.push_back(rewards[static_cast<std::size_t>(i)]);
                }
                if (cfg.algorithm == Algorithm::Pgn) {
                    nn::adam_step(ag.net, pgn_rule(ag.net, x, actions, own_rewards).grads, ag.opt, true);
                } else {
                    Eigen::MatrixXd taken(sched_.critic_input_dim(), m);
                    Eigen::MatrixXd gains(sched_.critic_input_dim() - 1, m);
                    for (Eigen::Index c = 0; c < m; ++c) {
                        const int i = mine[static_cast<std::size_t>(c)];
                        const CriticState cs = build_critic_state(r_, a_, t, i, sched_.state_width());
                        taken.col(c) = sched_.critic_features(cs, unit_action[static_cast<std::size_t>(i)]);
                        gains.col(c) = taken.col(c).head(gains.rows());
                    }
                    // Actor direction from the critic before this step's update.
                    const RuleGradient actor = actor_rule(ag.net, ag.critic, x, gains);
                    nn::adam_step(ag.critic, critic_rule(ag.critic, taken, own_rewards).grads, ag.critic_opt, false);
                    nn::adam_step(ag.net, actor.grads, ag.opt, true);
                }
                ++ag.updates;
                for (int i : mine) {
                    if (static_cast<int>(ag.reward_memory.size()) < cfg.hyper.minibatch) {
                        ag.reward_memory.push_back(rewards[static_cast<std::size_t>(i)]);
                    }
                }
            }
            break;
        }
        if (learner_->trace_ != nullptr) {
            std::ostream& out = *learner_->trace_;
            for (const auto& st : steps_) {
                out << r_.id << ',' << t << ',' << st.device << ',' << st.state_hash << ','
                    << st.action_dbm << ',' << watts_to_dbm(st.power_w) << ',' << st.rate << ','
                    << st.reward << '\n';
            }
        }
    }

    prev_power_ = power;
    prev_rate_ = rates;
    rates_.insert(rates_.end(), rates.begin(), rates.end());
    ++t_;
    return steps_;
}

void EpisodeRunner::finish()
{
    if (learner_ == nullptr || finished_) {
        return;
    }
    finished_ = true;
    const auto& cfg = sched_.config();
    for (auto& ag : learner_->agents_) {
        if (cfg.algorithm == Algorithm::Dqn) {
            const auto batch = ag.replay->sample(static_cast<std::size_t>(cfg.hyper.minibatch), ag.rng);
            if (!batch) {
                continue;
            }
            const auto m = static_cast<Eigen::Index>(batch->size());
            Eigen::MatrixXd x(sched_.actor_input_dim(), m);
            std::vector<int> actions;
            std::vector<double> batch_rewards;
            double total = 0.0;
            for (Eigen::Index c = 0; c < m; ++c) {
                const Experience& e = *(*batch)[static_cast<std::size_t>(c)];
                x.col(c) = e.state;
                actions.push_back(e.action);
                batch_rewards.push_back(e.reward);
                total += e.reward;
            }
            nn::adam_step(ag.net, dqn_rule(ag.net, x, actions, batch_rewards).grads, ag.opt, false);
            ++ag.updates;
            if (total > ag.best_reward) {
                snapshot(ag, total);
            }
        } else if (static_cast<int>(ag.reward_memory.size()) >= cfg.hyper.minibatch) {
            double total = 0.0;
            for (double v : ag.reward_memory) {
                total += v;
            }
            if (total > ag.best_reward) {
                snapshot(ag, total);
            }
            ag.reward_memory.clear();
        }
    }
    ++learner_->realizations_trained_;
}

RuleGradient dqn_rule(const nn::MlpParams& q, const Eigen::MatrixXd& states, std::span<const int> actions,
                      std::span<const double> rewards)
{
    const Eigen::Index m = states.cols();
    nn::ForwardCache cache;
    const Eigen::MatrixXd qv = nn::forward_batch(q, states, &cache);
    Eigen::MatrixXd up = Eigen::MatrixXd::Zero(qv.rows(), m);
    RuleGradient out;
    for (Eigen::Index c = 0; c < m; ++c) {
        const auto k = static_cast<std::size_t>(c);
        const double err = qv(actions[k], c) - rewards[k];
        out.value += 0.5 * err * err / static_cast<double>(m);
        up(actions[k], c) = err / static_cast<double>(m);
    }
    out.grads = nn::backward(q, cache, up);
    return out;
}

RuleGradient pgn_rule(const nn::MlpParams& policy, const Eigen::MatrixXd& states, std::span<const int> actions,
                      std::span<const double> rewards)
{
    const Eigen::Index m = states.cols();
    nn::ForwardCache cache;
    const Eigen::MatrixXd logits = nn::forward_batch(policy, states, &cache);
    Eigen::MatrixXd up(logits.rows(), m);
    RuleGradient out;
    for (Eigen::Index c = 0; c < m; ++c) {
        const auto k = static_cast<std::size_t>(c);
        const Eigen::VectorXd pi = softmax(logits.col(c));
        out.value += rewards[k] * std::log(pi[actions[k]]) / static_cast<double>(m);
        Eigen::VectorXd g = -pi;
        g[actions[k]] += 1.0;
        up.col(c) = rewards[k] / static_cast<double>(m) * g;
    }
    out.grads = nn::backward(policy, cache, up);
    return out;
}

RuleGradient critic_rule(const nn::MlpParams& critic, const Eigen::MatrixXd& inputs,
                         std::span<const double> rewards)
{
    const Eigen::Index m = inputs.cols();
    nn::ForwardCache cache;
    const Eigen::MatrixXd qv = nn::forward_batch(critic, inputs, &cache);
    Eigen::MatrixXd up(1, m);
    RuleGradient out;
    for (Eigen::Index c = 0; c < m; ++c) {
        const double err = qv(0, c) - rewards[static_cast<std::size_t>(c)];
        out.value += 0.5 * err * err / static_cast<double>(m);
        up(0, c) = err / static_cast<double>(m);
    }
    out.grads = nn::backward(critic, cache, up);
    return out;
}

RuleGradient actor_rule(const nn::MlpParams& actor, const nn::MlpParams& critic, const Eigen::MatrixXd& states,
                        const Eigen::MatrixXd& critic_gains)
{
    const Eigen::Index m = states.cols();
    const Eigen::Index last = critic_gains.rows();
    nn::ForwardCache cache;
    const Eigen::MatrixXd out_a = nn::forward_batch(actor, states, &cache);
    Eigen::MatrixXd cin(last + 1, m);
    Eigen::RowVectorXd u(m);
    for (Eigen::Index c = 0; c < m; ++c) {
        u[c] = sigmoid(out_a(0, c));
        cin.col(c).head(last) = critic_gains.col(c);
        cin(last, c) = 2.0 * u[c] - 1.0;
    }
    nn::ForwardCache ccache;
    const Eigen::MatrixXd qv = nn::forward_batch(critic, cin, &ccache);
    const nn::Gradients dq = nn::backward(critic, ccache, Eigen::MatrixXd::Constant(1, m, 1.0 / static_cast<double>(m)));
    Eigen::MatrixXd up(1, m);
    RuleGradient out;
    for (Eigen::Index c = 0; c < m; ++c) {
        out.value += qv(0, c) / static_cast<double>(m);
        up(0, c) = 2.0 * dq.input(last, c) * u[c] * (1.0 - u[c]);
    }
    out.grads = nn::backward(actor, cache, up);
    return out;
}
} // namespace iotsched
