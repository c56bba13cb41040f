#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "introspect/errors.hpp"

namespace introspect::optim {

// Step-indexed learning-rate schedules. All rules are pure functions of the
// step counter so resuming a run mid-stream needs no schedule state.
struct LrSchedule {
    enum class Rule { constant, step_decay, inv_decay };

    double base_lr = 0.0;
    Rule rule = Rule::constant;
    int64_t interval = 0;  // step_decay: steps between decays
    double factor = 1.0;   // step_decay: multiplier applied per interval
    double gamma = 0.0;    // inv_decay
    double power = 0.0;    // inv_decay

    static LrSchedule constant(double base_lr) {
        LrSchedule s;
        s.base_lr = base_lr;
        s.rule = Rule::constant;
        s.validate();
        return s;
    }
    static LrSchedule step_decay(double base_lr, int64_t interval, double factor) {
        LrSchedule s;
        s.base_lr = base_lr;
        s.rule = Rule::step_decay;
        s.interval = interval;
        s.factor = factor;
        s.validate();
        return s;
    }
    static LrSchedule inv_decay(double base_lr, double gamma, double power) {
        LrSchedule s;
        s.base_lr = base_lr;
        s.rule = Rule::inv_decay;
        s.gamma = gamma;
        s.power = power;
        s.validate();
        return s;
    }

    void validate() const {
        if (!(base_lr > 0.0)) throw SpecError("schedule base_lr must be > 0");
        if (rule == Rule::step_decay) {
            if (interval <= 0) throw SpecError("step-decay interval must be > 0");
            if (!(factor > 0.0 && factor <= 1.0))
                throw SpecError("step-decay factor must lie in (0, 1]");
        }
        if (rule == Rule::inv_decay && gamma < 0.0)
            throw SpecError("inv-decay gamma must be >= 0");
    }
};

inline double lr_at(const LrSchedule& s, int64_t step) {
    if (step < 0) throw RangeError("lr_at: step must be >= 0");
    switch (s.rule) {
        case LrSchedule::Rule::constant:
            return s.base_lr;
        case LrSchedule::Rule::step_decay:
            return s.base_lr * std::pow(s.factor, static_cast<double>(step / s.interval));
        case LrSchedule::Rule::inv_decay:
            return s.base_lr * std::pow(1.0 + s.gamma * static_cast<double>(step), -s.power);
    }
    throw SpecError("unknown schedule rule");
}

}  // namespace introspect::optim
