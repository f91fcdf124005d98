#pragma once

#include <functional>
#include <string>

namespace neoseize::log {

using Sink = std::function<void(const std::string&)>;

// Warnings go to stderr unless a sink is installed. Returns the previous sink.
Sink set_warning_sink(Sink sink);

void warn(const std::string& message);

// Installs a sink for the lifetime of the object; used by tests to capture warnings.
class ScopedSink {
 public:
  explicit ScopedSink(Sink sink) : previous_(set_warning_sink(std::move(sink))) {}
  ~ScopedSink() { set_warning_sink(std::move(previous_)); }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;

 private:
  Sink previous_;
};

}  // namespace neoseize::log
