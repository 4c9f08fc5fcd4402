#include "clinstructor/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace clinstructor::log {
namespace {

std::atomic<Level> g_level{Level::kInfo};
std::mutex g_mu;

const char* tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    default: return "";
  }
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void write(Level level, std::string_view message) {
  std::lock_guard lock(g_mu);
  std::fprintf(stderr, "[%s] %.*s\n", tag(level), static_cast<int>(message.size()),
               message.data());
}

}  // namespace clinstructor::log
