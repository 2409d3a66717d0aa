#pragma once

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/err.h>
#include <openssl/ssl.h>

#include <p1451/common.hpp>

namespace p1451::net {

using Clock = std::chrono::steady_clock;
using Deadline = std::optional<Clock::time_point>;

inline Deadline after(std::chrono::milliseconds ms) { return Clock::now() + ms; }

inline void ensure_init() {
    static std::once_flag once;
    std::call_once(once, [] {
        ::signal(SIGPIPE, SIG_IGN);
        SSL_library_init();
        SSL_load_error_strings();
    });
}

namespace detail {

inline std::string ssl_error_text() {
    char buf[256];
    unsigned long err = ERR_get_error();
    if (err == 0) return "unknown TLS error";
    ERR_error_string_n(err, buf, sizeof(buf));
    ERR_clear_error();
    return buf;
}

inline int poll_fd(int fd, short events, Deadline deadline) {
    int timeout_ms = -1;
    if (deadline) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now());
        timeout_ms = static_cast<int>(std::max<long long>(0, left.count()));
    }
    pollfd pfd{fd, events, 0};
    return ::poll(&pfd, 1, timeout_ms);
}

inline bool expired(Deadline deadline) { return deadline && Clock::now() >= *deadline; }

inline void set_nonblocking(int fd) {
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

}  // namespace detail

/// OpenSSL context wrapper; build one per broker or client configuration.
class TlsContext {
public:
    TlsContext() = default;
    TlsContext(TlsContext&& other) noexcept : ctx_(other.ctx_) { other.ctx_ = nullptr; }
    TlsContext& operator=(TlsContext&& other) noexcept {
        if (this != &other) {
            reset();
            ctx_ = other.ctx_;
            other.ctx_ = nullptr;
        }
        return *this;
    }
    TlsContext(const TlsContext&) = delete;
    TlsContext& operator=(const TlsContext&) = delete;
    ~TlsContext() { reset(); }

    static Result<TlsContext> server(const std::string& cert_path, const std::string& key_path) {
        ensure_init();
        TlsContext tls;
        tls.ctx_ = SSL_CTX_new(TLS_server_method());
        if (!tls.ctx_) return make_error(Errc::io_error, detail::ssl_error_text());
        SSL_CTX_set_min_proto_version(tls.ctx_, TLS1_2_VERSION);
        if (SSL_CTX_use_certificate_chain_file(tls.ctx_, cert_path.c_str()) != 1)
            return make_error(Errc::io_error, "certificate: " + detail::ssl_error_text());
        if (SSL_CTX_use_PrivateKey_file(tls.ctx_, key_path.c_str(), SSL_FILETYPE_PEM) != 1)
            return make_error(Errc::io_error, "private key: " + detail::ssl_error_text());
        if (SSL_CTX_check_private_key(tls.ctx_) != 1)
            return make_error(Errc::io_error, "key/certificate mismatch");
        return tls;
    }

    /// Client context. With a CA file the peer certificate and hostname are
    /// verified; without one any certificate is accepted (test setups).
    static Result<TlsContext> client(const std::optional<std::string>& ca_path) {
        ensure_init();
        TlsContext tls;
        tls.ctx_ = SSL_CTX_new(TLS_client_method());
        if (!tls.ctx_) return make_error(Errc::io_error, detail::ssl_error_text());
        SSL_CTX_set_min_proto_version(tls.ctx_, TLS1_2_VERSION);
        if (ca_path) {
            if (SSL_CTX_load_verify_locations(tls.ctx_, ca_path->c_str(), nullptr) != 1)
                return make_error(Errc::io_error, "CA file: " + detail::ssl_error_text());
            SSL_CTX_set_verify(tls.ctx_, SSL_VERIFY_PEER, nullptr);
            tls.verify_hostname_ = true;
        } else {
            SSL_CTX_set_verify(tls.ctx_, SSL_VERIFY_NONE, nullptr);
        }
        return tls;
    }

    SSL_CTX* native() const { return ctx_; }
    bool verify_hostname() const { return verify_hostname_; }
    bool valid() const { return ctx_ != nullptr; }

private:
    void reset() {
        if (ctx_) SSL_CTX_free(ctx_);
        ctx_ = nullptr;
    }

    SSL_CTX* ctx_ = nullptr;
    bool verify_hostname_ = false;
};

/// Byte stream over a nonblocking socket, plain or TLS. Reads and writes
/// take deadlines; shutdown() may be called from another thread to wake a
/// blocked reader.
class Stream {
public:
    Stream() = default;
    Stream(Stream&& other) noexcept { *this = std::move(other); }
    Stream& operator=(Stream&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = other.fd_;
            ssl_ = other.ssl_;
            other.fd_ = -1;
            other.ssl_ = nullptr;
        }
        return *this;
    }
    Stream(const Stream&) = delete;
    Stream& operator=(const Stream&) = delete;
    ~Stream() { close(); }

    bool valid() const { return fd_ >= 0; }

    static Result<Stream> connect(const std::string& host, std::uint16_t port,
                                  const TlsContext* tls, Deadline deadline) {
        ensure_init();
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        std::string port_str = std::to_string(port);
        if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0 || !res)
            return make_error(Errc::io_error, "cannot resolve " + host);
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);

        int fd = -1;
        std::string last_err = "no addresses";
        for (addrinfo* ai = res; ai; ai = ai->ai_next) {
            fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
            if (fd < 0) continue;
            detail::set_nonblocking(fd);
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
            if (errno == EINPROGRESS) {
                int pr = detail::poll_fd(fd, POLLOUT, deadline);
                if (pr > 0) {
                    int soerr = 0;
                    socklen_t len = sizeof(soerr);
                    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &soerr, &len);
                    if (soerr == 0) break;
                    last_err = std::strerror(soerr);
                } else {
                    last_err = pr == 0 ? "connect timeout" : std::strerror(errno);
                }
            } else {
                last_err = std::strerror(errno);
            }
            ::close(fd);
            fd = -1;
        }
        if (fd < 0) return make_error(Errc::io_error, "connect " + host + ": " + last_err);

        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

        Stream s;
        s.fd_ = fd;
        if (tls && tls->valid()) {
            s.ssl_ = SSL_new(tls->native());
            if (!s.ssl_) return make_error(Errc::io_error, detail::ssl_error_text());
            SSL_set_fd(s.ssl_, fd);
            if (tls->verify_hostname()) SSL_set1_host(s.ssl_, host.c_str());
            if (auto hs = s.handshake(&SSL_connect, deadline); !hs)
                return make_error(Errc::auth_failed, "TLS handshake: " + hs.error().detail);
        }
        return s;
    }

    /// Wraps an accepted socket; performs the server-side handshake when a
    /// TLS context is given.
    static Result<Stream> accepted(int fd, const TlsContext* tls, Deadline deadline) {
        detail::set_nonblocking(fd);
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        Stream s;
        s.fd_ = fd;
        if (tls && tls->valid()) {
            s.ssl_ = SSL_new(tls->native());
            if (!s.ssl_) return make_error(Errc::io_error, detail::ssl_error_text());
            SSL_set_fd(s.ssl_, fd);
            if (auto hs = s.handshake(&SSL_accept, deadline); !hs)
                return make_error(Errc::auth_failed, "TLS handshake: " + hs.error().detail);
        }
        return s;
    }

    /// Reads at least one octet, waiting until `deadline`.
    Result<std::size_t> read_some(std::uint8_t* buf, std::size_t len, Deadline deadline) {
        while (true) {
            if (ssl_) {
                ERR_clear_error();
                int n = SSL_read(ssl_, buf, static_cast<int>(len));
                if (n > 0) return static_cast<std::size_t>(n);
                int err = SSL_get_error(ssl_, n);
                if (err == SSL_ERROR_ZERO_RETURN) return make_error(Errc::closed);
                if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE) {
                    if (auto w = wait(err == SSL_ERROR_WANT_READ ? POLLIN : POLLOUT, deadline); !w)
                        return w.error();
                    continue;
                }
                if (err == SSL_ERROR_SYSCALL && n == 0) return make_error(Errc::closed);
                return make_error(Errc::io_error, detail::ssl_error_text());
            }
            ssize_t n = ::recv(fd_, buf, len, 0);
            if (n > 0) return static_cast<std::size_t>(n);
            if (n == 0) return make_error(Errc::closed);
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) {
                if (auto w = wait(POLLIN, deadline); !w) return w.error();
                continue;
            }
            return make_error(Errc::io_error, std::strerror(errno));
        }
    }

    Result<void> write_all(BytesView data, Deadline deadline) {
        std::size_t off = 0;
        while (off < data.size()) {
            if (ssl_) {
                ERR_clear_error();
                int n = SSL_write(ssl_, data.data() + off, static_cast<int>(data.size() - off));
                if (n > 0) {
                    off += static_cast<std::size_t>(n);
                    continue;
                }
                int err = SSL_get_error(ssl_, n);
                if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE) {
                    if (auto w = wait(err == SSL_ERROR_WANT_READ ? POLLIN : POLLOUT, deadline); !w)
                        return w.error();
                    continue;
                }
                if (err == SSL_ERROR_ZERO_RETURN) return make_error(Errc::closed);
                return make_error(Errc::io_error, detail::ssl_error_text());
            }
            ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n >= 0) {
                off += static_cast<std::size_t>(n);
                continue;
            }
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) {
                if (auto w = wait(POLLOUT, deadline); !w) return w.error();
                continue;
            }
            if (errno == EPIPE || errno == ECONNRESET) return make_error(Errc::closed);
            return make_error(Errc::io_error, std::strerror(errno));
        }
        return {};
    }

    /// Thread-safe: interrupts a reader blocked in poll.
    void shutdown() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    int fd() const { return fd_; }

    void close() {
        if (ssl_) {
            SSL_shutdown(ssl_);  // best effort, nonblocking
            SSL_free(ssl_);
            ssl_ = nullptr;
        }
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    Result<void> wait(short events, Deadline deadline) {
        if (detail::expired(deadline)) return make_error(Errc::timeout);
        int pr = detail::poll_fd(fd_, events, deadline);
        if (pr == 0) return make_error(Errc::timeout);
        if (pr < 0 && errno != EINTR) return make_error(Errc::io_error, std::strerror(errno));
        return {};
    }

    template <typename Fn>
    Result<void> handshake(Fn op, Deadline deadline) {
        while (true) {
            ERR_clear_error();
            int rc = op(ssl_);
            if (rc == 1) return {};
            int err = SSL_get_error(ssl_, rc);
            if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE) {
                if (auto w = wait(err == SSL_ERROR_WANT_READ ? POLLIN : POLLOUT, deadline); !w)
                    return w.error();
                continue;
            }
            return make_error(Errc::io_error, detail::ssl_error_text());
        }
    }

    int fd_ = -1;
    SSL* ssl_ = nullptr;
};

class TcpListener {
public:
    TcpListener() = default;
    TcpListener(TcpListener&& other) noexcept : fd_(other.fd_), port_(other.port_) {
        other.fd_ = -1;
    }
    TcpListener& operator=(TcpListener&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = other.fd_;
            port_ = other.port_;
            other.fd_ = -1;
        }
        return *this;
    }
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener() { close(); }

    static Result<TcpListener> bind(const std::string& host, std::uint16_t port) {
        ensure_init();
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE;
        addrinfo* res = nullptr;
        std::string port_str = std::to_string(port);
        if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), port_str.c_str(), &hints, &res) !=
                0 ||
            !res)
            return make_error(Errc::io_error, "cannot resolve " + host);
        std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);

        int fd = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
        if (fd < 0) return make_error(Errc::io_error, std::strerror(errno));
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0) {
            std::string err = std::strerror(errno);
            ::close(fd);
            return make_error(Errc::io_error, "bind: " + err);
        }
        if (::listen(fd, 64) != 0) {
            std::string err = std::strerror(errno);
            ::close(fd);
            return make_error(Errc::io_error, "listen: " + err);
        }
        detail::set_nonblocking(fd);

        sockaddr_storage addr{};
        socklen_t len = sizeof(addr);
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        std::uint16_t bound = 0;
        if (addr.ss_family == AF_INET)
            bound = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
        else if (addr.ss_family == AF_INET6)
            bound = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);

        TcpListener l;
        l.fd_ = fd;
        l.port_ = bound;
        return l;
    }

    /// Accepts one connection; Errc::timeout when the deadline passes first.
    Result<int> accept(Deadline deadline) {
        while (true) {
            int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
            if (fd >= 0) return fd;
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) {
                if (detail::expired(deadline)) return make_error(Errc::timeout);
                int pr = detail::poll_fd(fd_, POLLIN, deadline);
                if (pr == 0) return make_error(Errc::timeout);
                if (pr < 0 && errno != EINTR) return make_error(Errc::io_error, std::strerror(errno));
                continue;
            }
            if (errno == EBADF || errno == EINVAL) return make_error(Errc::closed);
            return make_error(Errc::io_error, std::strerror(errno));
        }
    }

    std::uint16_t port() const { return port_; }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

inline Result<Endpoint> parse_endpoint(std::string_view text) {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon + 1 >= text.size())
        return make_error(Errc::parse_error, "expected host:port");
    Endpoint ep;
    ep.host = std::string(text.substr(0, colon));
    int port = 0;
    for (char c : text.substr(colon + 1)) {
        if (c < '0' || c > '9') return make_error(Errc::parse_error, "bad port");
        port = port * 10 + (c - '0');
        if (port > 65535) return make_error(Errc::parse_error, "port out of range");
    }
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

}  // namespace p1451::net
