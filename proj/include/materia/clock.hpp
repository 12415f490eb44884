#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

namespace materia {

/// Millisecond clock seam. The rate limiter and retry backoff read and sleep
/// through this so tests can run against simulated time.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() const = 0;
    virtual void sleep_until_ms(std::int64_t deadline_ms) = 0;
};

class SteadyClock final : public Clock {
public:
    std::int64_t now_ms() const override;
    void sleep_until_ms(std::int64_t deadline_ms) override;
};

/// Time only moves when someone sleeps; sleeping jumps straight to the
/// deadline. Monotonic and safe to share across threads.
class SimulatedClock final : public Clock {
public:
    explicit SimulatedClock(std::int64_t start_ms = 0) : now_(start_ms) {}

    std::int64_t now_ms() const override { return now_.load(); }
    void sleep_until_ms(std::int64_t deadline_ms) override { advance_to(deadline_ms); }

    void advance_by(std::int64_t delta_ms) { now_.fetch_add(delta_ms); }
    void advance_to(std::int64_t t_ms) {
        auto cur = now_.load();
        while (cur < t_ms && !now_.compare_exchange_weak(cur, t_ms)) {
        }
    }

private:
    std::atomic<std::int64_t> now_;
};

std::shared_ptr<Clock> default_clock();

}  // namespace materia
