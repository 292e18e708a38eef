#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "logkg/grid.hpp"
#include "logkg/problems.hpp"
#include "logkg/schemes.hpp"

namespace logkg {

/// Unreadable, mismatching or truncated cache entry.
class CacheError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything that determines a reference trajectory.
struct ReferenceKey {
    Scheme scheme = Scheme::cnfd;
    std::string problem;
    double epsilon = 0.0;
    double lambda = 1.0;
    double a = 0.0;
    double b = 0.0;
    std::size_t cells = 0;
    double tau = 0.0;
    double T = 0.0;
    double newton_tol = 1e-12;

    /// Canonical single-line text; doubles are printed with 17 significant digits.
    std::string canonical() const {
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "scheme=%s;epsilon=%.17g;lambda=%.17g;a=%.17g;b=%.17g;N=%zu;tau=%.17g;T=%.17g;"
                      "newton_tol=%.17g;problem=",
                      to_string(scheme), epsilon, lambda, a, b, cells, tau, T, newton_tol);
        return buf + problem;
    }

    std::string digest() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(detail::fnv1a(canonical())));
        return buf;
    }

    friend bool operator==(const ReferenceKey&, const ReferenceKey&) = default;
};

/// Directory of reference layers keyed by parameter digest.
///
/// File `ref-<digest>.txt`, format version 1:
///
///     logkg-reference 1
///     key <canonical key>
///     cells <N>
///     prev <N+1 values, %.17g, space separated>
///     curr <N+1 values>
///     end
///
/// Writers hold an exclusive flock on `ref-<digest>.lock` while computing and
/// publish with an atomic rename, so readers never see partial files.
class ReferenceCache {
public:
    static constexpr int format_version = 1;

    explicit ReferenceCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    /// $LOGKG_CACHE_DIR, or ".logkg-cache" when unset.
    static std::filesystem::path default_dir() {
        if (const char* env = std::getenv("LOGKG_CACHE_DIR"); env && *env) return env;
        return ".logkg-cache";
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::filesystem::path entry_path(const ReferenceKey& key) const {
        return dir_ / ("ref-" + key.digest() + ".txt");
    }

    std::optional<WaveState> load(const ReferenceKey& key) const {
        const auto path = entry_path(key);
        std::ifstream in(path);
        if (!in) return std::nullopt;
        return parse(in, key, path.string());
    }

    void store(const ReferenceKey& key, const WaveState& state) const {
        ensure_dir();
        const auto path = entry_path(key);
        const auto tmp = path.string() + ".tmp." + std::to_string(::getpid());
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw CacheError("cannot write cache file '" + tmp + "'");
            out << "logkg-reference " << format_version << '\n';
            out << "key " << key.canonical() << '\n';
            out << "cells " << key.cells << '\n';
            write_layer(out, "prev", state.prev);
            write_layer(out, "curr", state.curr);
            out << "end\n";
            if (!out) throw CacheError("write failed for '" + tmp + "'");
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw CacheError("cannot publish cache file '" + path.string() + "': " + ec.message());
    }

    /// Cached layers for `key`, computing and storing them under the entry
    /// lock when absent.
    WaveState get_or_compute(const ReferenceKey& key, const std::function<WaveState()>& compute) const {
        if (auto hit = load(key)) return *std::move(hit);
        ensure_dir();
        const auto lock_path = dir_ / ("ref-" + key.digest() + ".lock");
        FileLock lock(lock_path.string());
        if (auto hit = load(key)) return *std::move(hit);
        WaveState state = compute();
        store(key, state);
        return state;
    }

private:
    class FileLock {
    public:
        explicit FileLock(const std::string& path) {
            fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
            if (fd_ < 0) throw CacheError("cannot open lock file '" + path + "'");
            if (::flock(fd_, LOCK_EX) != 0) {
                ::close(fd_);
                throw CacheError("cannot lock '" + path + "'");
            }
        }
        ~FileLock() {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
        FileLock(const FileLock&) = delete;
        FileLock& operator=(const FileLock&) = delete;

    private:
        int fd_ = -1;
    };

    void ensure_dir() const {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw CacheError("cannot create cache directory '" + dir_.string() + "': " + ec.message());
    }

    static void write_layer(std::ostream& out, const char* tag, const GridFunction& u) {
        out << tag;
        char buf[32];
        for (double v : u.values()) {
            std::snprintf(buf, sizeof buf, " %.17g", v);
            out << buf;
        }
        out << '\n';
    }

    static std::vector<double> read_layer(std::istream& in, const char* tag, std::size_t count,
                                          const std::string& where) {
        std::string line;
        if (!std::getline(in, line)) throw CacheError(where + ": missing '" + tag + "' layer");
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word != tag) throw CacheError(where + ": expected '" + tag + "', found '" + word + "'");
        std::vector<double> v;
        v.reserve(count);
        std::string tok;
        while (ls >> tok) {
            char* end = nullptr;
            const double x = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') throw CacheError(where + ": bad number '" + tok + "'");
            v.push_back(x);
        }
        if (v.size() != count) {
            throw CacheError(where + ": layer '" + tag + "' has " + std::to_string(v.size()) +
                             " values, expected " + std::to_string(count));
        }
        return v;
    }

    static WaveState parse(std::istream& in, const ReferenceKey& key, const std::string& where) {
        std::string line;
        if (!std::getline(in, line) || line != "logkg-reference " + std::to_string(format_version)) {
            throw CacheError(where + ": unknown cache format header");
        }
        if (!std::getline(in, line) || line != "key " + key.canonical()) {
            throw CacheError(where + ": key does not match the requested parameters");
        }
        if (!std::getline(in, line) || line != "cells " + std::to_string(key.cells)) {
            throw CacheError(where + ": cell count mismatch");
        }
        const Grid1D grid(key.a, key.b, key.cells);
        auto prev = read_layer(in, "prev", key.cells + 1, where);
        auto curr = read_layer(in, "curr", key.cells + 1, where);
        if (!std::getline(in, line) || line != "end") throw CacheError(where + ": truncated file");
        const auto steps = static_cast<std::size_t>(std::llround(key.T / key.tau));
        return {GridFunction(grid, std::move(prev)), GridFunction(grid, std::move(curr)), steps, key.T};
    }

    std::filesystem::path dir_;
};

}  // namespace logkg
