#include "rpl/core.hpp"

#include <atomic>
#include <iostream>

namespace rpl {

namespace {
std::atomic<bool> g_warnings{true};
std::atomic<std::ostream*> g_sink{nullptr};
}  // namespace

void warn(const std::string& message) {
    if (!g_warnings.load(std::memory_order_relaxed)) return;
    std::ostream* sink = g_sink.load(std::memory_order_relaxed);
    (sink ? *sink : std::cerr) << "warning: " << message << '\n';
}

std::ostream* set_warning_stream(std::ostream* stream) { return g_sink.exchange(stream); }

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled, std::memory_order_relaxed); }

bool warnings_enabled() { return g_warnings.load(std::memory_order_relaxed); }

}  // namespace rpl
