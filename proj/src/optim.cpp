#include "mgkd/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mgkd/kernels.hpp"

namespace mgkd {

void TrainSchedule::validate() const {
    if (optimizer != "sgd") throw InvalidArgument("unsupported optimizer '" + optimizer + "' (valid: sgd)");
    if (!(initial_lr > 0.0)) throw InvalidArgument("initial_lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be non-negative");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) throw InvalidArgument("lr_decay_factor must be in (0, 1)");
    if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] <= 0 || milestones[i] >= epochs)
            throw InvalidArgument("milestone " + std::to_string(milestones[i]) + " outside (0, epochs)");
        if (i > 0 && milestones[i] <= milestones[i - 1])
            throw InvalidArgument("milestones must be strictly increasing");
    }
}

double TrainSchedule::lr_at(int epoch) const {
    double lr = initial_lr;
    for (int m : milestones)
        if (epoch >= m) lr *= lr_decay_factor;
    return lr;
}

TrainSchedule TrainSchedule::scaled(double factor) const {
    if (!(factor > 0.0)) throw InvalidArgument("schedule scale must be positive");
    TrainSchedule out = *this;
    out.epochs = std::max(1, static_cast<int>(std::lround(epochs * factor)));
    out.milestones.clear();
    for (int m : milestones) {
        const int s = static_cast<int>(std::lround(m * factor));
        if (s > 0 && s < out.epochs && (out.milestones.empty() || s > out.milestones.back())) out.milestones.push_back(s);
    }
    return out;
}

TrainSchedule default_branch_schedule() {
    TrainSchedule s;
    s.initial_lr = 0.1;
    s.epochs = 60;
    s.milestones = {30, 45};
    return s;
}

TrainSchedule default_student_schedule() {
    TrainSchedule s;
    s.initial_lr = 0.05;
    s.epochs = 240;
    s.milestones = {150, 180, 210};
    return s;
}

Sgd::Sgd(NamedParams params, const TrainSchedule& schedule)
    : params_(std::move(params)), lr_(schedule.initial_lr), momentum_(schedule.momentum),
      weight_decay_(schedule.weight_decay) {
    velocity_.reserve(params_.size());
    for (const auto& [name, p] : params_) velocity_.emplace_back(p->size(), 0.0f);
}

void Sgd::zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
}

void Sgd::step() {
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter* p = params_[i].second;
        k.sgd_momentum(p->value.data(), p->grad.data(), velocity_[i].data(), p->size(), static_cast<float>(lr_),
                       static_cast<float>(momentum_), static_cast<float>(weight_decay_));
    }
}

} // namespace mgkd
