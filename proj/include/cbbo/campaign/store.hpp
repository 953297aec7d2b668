#ifndef CBBO_CAMPAIGN_STORE_HPP
#define CBBO_CAMPAIGN_STORE_HPP

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include <cbbo/campaign/session.hpp>
#include <cbbo/common.hpp>

namespace cbbo::campaign {

namespace detail {
    /// Called after the temporary file is synced and before it replaces the
    /// session file. Test hook; empty by default.
    inline std::function<void()>& before_rename_hook()
    {
        static std::function<void()> hook;
        return hook;
    }

    inline std::string errno_text() { return std::strerror(errno); }

    inline void write_all(int fd, const std::string& text, const std::string& path)
    {
        const char* p = text.data();
        std::size_t left = text.size();
        while (left > 0) {
            const ssize_t n = ::write(fd, p, left);
            if (n < 0) {
                if (errno == EINTR)
                    continue;
                throw Error(ErrorKind::io, "write " + path + ": " + errno_text());
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
    }
} // namespace detail

/// Writes `text` to `path` through a synced temporary file and a rename,
/// so readers only ever see the old or the new content.
inline void atomic_write(const std::filesystem::path& path, const std::string& text)
{
    const auto tmp = path.string() + ".tmp";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0)
        throw Error(ErrorKind::io, "open " + tmp + ": " + detail::errno_text());
    try {
        detail::write_all(fd, text, tmp);
        if (::fsync(fd) != 0)
            throw Error(ErrorKind::io, "fsync " + tmp + ": " + detail::errno_text());
    }
    catch (...) {
        ::close(fd);
        ::unlink(tmp.c_str());
        throw;
    }
    ::close(fd);
    if (auto& hook = detail::before_rename_hook())
        hook();
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        const auto msg = detail::errno_text();
        ::unlink(tmp.c_str());
        throw Error(ErrorKind::io, "rename " + tmp + " -> " + path.string() + ": " + msg);
    }
    auto dir = path.parent_path();
    if (dir.empty())
        dir = ".";
    const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

inline void save_session(const std::filesystem::path& path, const Session& session)
{
    atomic_write(path, to_json(session).dump(2) + "\n");
}

inline Session load_session(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::io, "cannot open session file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, "cannot parse session file " + path.string() + ": " + e.what());
    }
    return session_from_json(j);
}

/// Exclusive writer lock: `<session>.lock`, created with O_EXCL and removed
/// on destruction.
class SessionLock {
public:
    explicit SessionLock(const std::filesystem::path& session) : path_(session.string() + ".lock")
    {
        const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
        if (fd < 0) {
            if (errno == EEXIST)
                throw Error(ErrorKind::session_state,
                    "session is locked by another command (" + path_ + "); remove the lock file if no command is running");
            throw Error(ErrorKind::io, "create " + path_ + ": " + detail::errno_text());
        }
        const auto pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }

    SessionLock(const SessionLock&) = delete;
    SessionLock& operator=(const SessionLock&) = delete;

    ~SessionLock() { ::unlink(path_.c_str()); }

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace cbbo::campaign

#endif
