#include "mgkd/supervised.hpp"

#include <cmath>

#include "mgkd/distill_math.hpp"
#include "mgkd/eval.hpp"

namespace mgkd {
namespace {

std::size_t correct_count(const MatrixF& logits, const LabelBatch& y) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i)
        if (argmax(logits.row(i)) == static_cast<std::size_t>(y[i])) ++hits;
    return hits;
}

} // namespace

Network train_network(Network net, const DatasetSplit& train, const DatasetSplit* val, const TrainSchedule& schedule,
                      std::uint64_t seed, const Augmentation& aug, std::vector<MetricsRecord>* records) {
    schedule.validate();
    if (train.size() == 0) throw InvalidArgument("cannot train on an empty split");
    std::mt19937_64 rng(seed);
    Sgd opt(net.named_parameters(), schedule);
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        opt.set_lr(schedule.lr_at(epoch));
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (const auto& idx : epoch_batches(train.size(), schedule.batch_size, rng)) {
            Tensor x = train.gather(idx);
            augment_in_place(x, aug, rng);
            const LabelBatch y = train.gather_labels(idx);
            opt.zero_grad();
            const Tensor f = net.backbone.forward_train(x);
            const MatrixF logits = net.classifier.forward_train(f).as_matrix();
            const LossGrad ce = cross_entropy_grad(model_logits(logits, "network"), y);
            if (!std::isfinite(ce.value)) throw NumericFailure("non-finite cross entropy at epoch " + std::to_string(epoch));
            net.backbone.backward(net.classifier.backward(Tensor::from_matrix(ce.grad.cast<float>())));
            opt.step();
            loss_sum += ce.value * static_cast<double>(idx.size());
            hits += correct_count(logits, y);
        }
        if (records) {
            MetricsRecord r{epoch, opt.lr(), {}};
            r.values["train_loss"] = loss_sum / static_cast<double>(train.size());
            r.values["train_acc"] = static_cast<double>(hits) / static_cast<double>(train.size());
            if (val && val->size() > 0) r.values["val_acc"] = top1_accuracy(net, *val);
            records->push_back(std::move(r));
        }
    }
    return net;
}

void fit_linear_head(Linear& head, const MatrixF& features, const std::vector<int>& labels, std::size_t num_classes,
                     const TrainSchedule& schedule, std::uint64_t seed) {
    schedule.validate();
    if (features.rows() == 0) throw InvalidArgument("cannot fit a head on zero samples");
    if (features.rows() != labels.size()) throw InvalidArgument("feature/label count mismatch");
    if (head.in_features() != features.cols() || head.out_features() != num_classes)
        throw InvalidArgument("head is " + std::to_string(head.in_features()) + " -> " + std::to_string(head.out_features()) +
                              ", data needs " + std::to_string(features.cols()) + " -> " + std::to_string(num_classes));
    const Tensor all = Tensor::from_matrix(features);
    DatasetSplit feats{"features", all, labels, num_classes};
    std::mt19937_64 rng(seed);
    Sgd opt(NamedParams{{"weight", &head.weight}, {"bias", &head.bias}}, schedule);
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        opt.set_lr(schedule.lr_at(epoch));
        for (const auto& idx : epoch_batches(feats.size(), schedule.batch_size, rng)) {
            const Tensor x = feats.gather(idx);
            opt.zero_grad();
            const MatrixF logits = head.forward_train(x).as_matrix();
            const LossGrad ce = cross_entropy_grad(model_logits(logits, "head"), feats.gather_labels(idx));
            if (!std::isfinite(ce.value)) throw NumericFailure("non-finite cross entropy while fitting a head");
            head.backward(Tensor::from_matrix(ce.grad.cast<float>()));
            opt.step();
        }
    }
}

} // namespace mgkd
