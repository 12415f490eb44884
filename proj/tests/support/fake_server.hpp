#pragma once

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

namespace materia::testing {

/// Chat-completions stand-in. Counts concurrent requests and plays back a
/// script of statuses; once the script runs out every request gets 200.
class FakeChatServer {
public:
    struct Step {
        int status = 200;
        std::string text = "ok";
    };

    explicit FakeChatServer(std::chrono::milliseconds hold = std::chrono::milliseconds(0)) : hold_(hold) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int now = ++in_flight_;
            {
                std::lock_guard lock(mu_);
                peak_ = std::max(peak_, now);
                ++requests_;
                bodies_.push_back(req.body);
            }
            if (hold_.count() > 0) std::this_thread::sleep_for(hold_);
            Step step = next_step(req.body);
            --in_flight_;
            res.status = step.status;
            if (step.status >= 200 && step.status < 300) {
                nlohmann::json j;
                j["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", step.text}}}}});
                j["usage"] = {{"prompt_tokens", 1}, {"completion_tokens", 1}};
                res.set_content(j.dump(), "application/json");
            } else {
                res.set_content(nlohmann::json{{"error", {{"message", step.text}}}}.dump(), "application/json");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~FakeChatServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    void script(std::vector<Step> steps) {
        std::lock_guard lock(mu_);
        script_.assign(steps.begin(), steps.end());
    }

    /// Requests whose body contains `needle` get `step` regardless of the script.
    void fail_when(std::string needle, Step step) {
        std::lock_guard lock(mu_);
        rules_.emplace_back(std::move(needle), std::move(step));
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    int peak() const {
        std::lock_guard lock(mu_);
        return peak_;
    }
    int requests() const {
        std::lock_guard lock(mu_);
        return requests_;
    }
    std::vector<std::string> bodies() const {
        std::lock_guard lock(mu_);
        return bodies_;
    }

private:
    Step next_step(const std::string& body) {
        std::lock_guard lock(mu_);
        for (const auto& [needle, step] : rules_) {
            if (body.find(needle) != std::string::npos) return step;
        }
        if (script_.empty()) return {};
        Step s = script_.front();
        script_.pop_front();
        return s;
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::chrono::milliseconds hold_;
    std::atomic<int> in_flight_{0};
    mutable std::mutex mu_;
    int peak_ = 0;
    int requests_ = 0;
    std::vector<std::string> bodies_;
    std::deque<Step> script_;
    std::vector<std::pair<std::string, Step>> rules_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("materia-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return MATERIA_SOURCE_DIR; }

}  // namespace materia::testing
