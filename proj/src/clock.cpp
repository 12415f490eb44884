#include "materia/clock.hpp"

#include <chrono>
#include <thread>

namespace materia {

std::int64_t SteadyClock::now_ms() const {
    using namespace std::chrono;
    return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

void SteadyClock::sleep_until_ms(std::int64_t deadline_ms) {
    const auto delta = deadline_ms - now_ms();
    if (delta > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delta));
}

std::shared_ptr<Clock> default_clock() {
    static auto clock = std::make_shared<SteadyClock>();
    return clock;
}

}  // namespace materia
