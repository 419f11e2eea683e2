#include "scp/log.hpp"

#include <iostream>
#include <mutex>

namespace scp::log {
namespace {

std::mutex g_mutex;
bool g_quiet = false;

Sink& warning_sink() {
    static Sink sink = [](const std::string& message) { std::cerr << "warning: " << message << '\n'; };
    return sink;
}

}  // namespace

void warn(const std::string& message) {
    std::lock_guard lock(g_mutex);
    warning_sink()(message);
}

void info(const std::string& message) {
    std::lock_guard lock(g_mutex);
    if (!g_quiet) std::cerr << message << '\n';
}

Sink set_warning_sink(Sink sink) {
    std::lock_guard lock(g_mutex);
    Sink previous = std::move(warning_sink());
    warning_sink() = std::move(sink);
    return previous;
}

void set_quiet(bool quiet) {
    std::lock_guard lock(g_mutex);
    g_quiet = quiet;
}

}  // namespace scp::log
