#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mgkd/model.hpp"

namespace mgkd {

/// SGD-with-momentum schedule with step decay at milestone epochs.
struct TrainSchedule {
    std::string optimizer = "sgd";
    double initial_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_decay_factor = 0.1;
    std::vector<int> milestones;
    int epochs = 1;
    std::size_t batch_size = 64;

    /// Throws InvalidArgument when milestones are not strictly increasing and < epochs, etc.
    void validate() const;
    double lr_at(int epoch) const;
    /// Epochs and milestones multiplied by `factor` (rounded; at least one epoch).
    TrainSchedule scaled(double factor) const;
};

/// Paper-scale defaults: branch training 60 epochs with decays at 30/45;
/// student training 240 epochs with decays at 150/180/210.
TrainSchedule default_branch_schedule();
TrainSchedule default_student_schedule();

class Sgd {
public:
    Sgd(NamedParams params, const TrainSchedule& schedule);

    void set_lr(double lr) noexcept { lr_ = lr; }
    double lr() const noexcept { return lr_; }

    void zero_grad();
    void step();

private:
    NamedParams params_;
    std::vector<std::vector<float>> velocity_;
    double lr_;
    double momentum_;
    double weight_decay_;
};

} // namespace mgkd
