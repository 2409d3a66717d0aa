#pragma once

#include <atomic>
#include <deque>
#include <fstream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <poll.h>
#include <sys/eventfd.h>
#include <sys/stat.h>
#include <unistd.h>

#include <p1451/acl.hpp>
#include <p1451/common.hpp>
#include <p1451/credentials.hpp>
#include <p1451/log.hpp>
#include <p1451/mqtt.hpp>
#include <p1451/net.hpp>
#include <p1451/teds.hpp>

namespace p1451::broker {

struct BrokerConfig {
    std::string listen_host = "127.0.0.1";
    std::uint16_t listen_port = 0;  // 0 picks an ephemeral port
    teds::SecurityLevel security_level = teds::SecurityLevel::N;
    std::optional<std::string> password_file;
    std::optional<std::string> acl_file;
    std::optional<std::string> tls_cert;
    std::optional<std::string> tls_key;
    int acl_poll_interval_ms = 500;
    int retransmit_interval_ms = 1000;
    std::size_t max_packet_bytes = 1 << 20;
};

/// Minimal MQTT 3.1.1 broker enforcing one of the six security levels:
/// levels A/C/E listen over TLS, B/C/D/E demand verified credentials,
/// D/E authorize every publish and subscribe against the ACL snapshot.
///
/// Each connection is serviced by one thread that owns all socket I/O;
/// deliveries from other connections are handed over through a per-session
/// outbound queue and an eventfd wakeup.
class Broker {
public:
    ~Broker() { stop(); }

    static Result<std::unique_ptr<Broker>> start(BrokerConfig config) {
        auto policies = teds::level_policies(config.security_level);
        std::string level_name(1, teds::level_letter(config.security_level));

        auto broker = std::unique_ptr<Broker>(new Broker());
        broker->config_ = config;
        broker->policies_ = policies;

        if (policies.encryption) {
            if (!config.tls_cert || !config.tls_key)
                return make_error(Errc::invalid_argument,
                                  "level " + level_name + " requires TLS certificate and key");
            auto tls = net::TlsContext::server(*config.tls_cert, *config.tls_key);
            if (!tls) return tls.error();
            broker->tls_ = std::move(*tls);
        }
        if (policies.authentication && !config.password_file)
            return make_error(Errc::invalid_argument,
                              "level " + level_name + " requires a password file");
        if (config.password_file) {
            auto creds = auth::CredentialStore::load(*config.password_file);
            if (!creds) return creds.error();
            broker->credentials_ = std::move(*creds);
        }
        if (policies.authorization) {
            if (!config.acl_file)
                return make_error(Errc::invalid_argument,
                                  "level " + level_name + " requires an ACL file");
            auto doc = load_acl_file(*config.acl_file);
            if (!doc) return doc.error();
            broker->acl_ = std::make_shared<const acl::AclDocument>(std::move(*doc));
            broker->acl_stamp_ = file_stamp(*config.acl_file);
        }

        auto listener = net::TcpListener::bind(config.listen_host, config.listen_port);
        if (!listener) return listener.error();
        broker->listener_ = std::move(*listener);

        log::event("broker_started", {{"level", level_name},
                                      {"port", std::to_string(broker->listener_.port())},
                                      {"tls", policies.encryption ? "on" : "off"}});
        broker->accept_thread_ = std::thread([b = broker.get()] { b->accept_loop(); });
        broker->housekeeping_thread_ = std::thread([b = broker.get()] { b->housekeeping_loop(); });
        return broker;
    }

    std::uint16_t port() const { return listener_.port(); }
    teds::SecurityLevel level() const { return config_.security_level; }

    void stop() {
        if (stopping_.exchange(true)) return;
        listener_.close();
        {
            std::lock_guard lock(mutex_);
            for (auto& [id, session] : sessions_) session->stream.shutdown();
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        if (housekeeping_thread_.joinable()) housekeeping_thread_.join();
        while (true) {
            std::list<std::thread> drained;
            {
                std::lock_guard lock(threads_mutex_);
                drained.swap(connection_threads_);
            }
            if (drained.empty()) break;
            for (auto& t : drained) t.join();
        }
        log::event("broker_stopped");
    }

    /// Re-reads the ACL file. A parse failure keeps the active policy;
    /// success drops subscriptions the new policy no longer allows.
    Result<void> reload_acl() {
        if (!config_.acl_file) return make_error(Errc::invalid_argument, "no ACL file configured");
        auto doc = load_acl_file(*config_.acl_file);
        if (!doc) {
            log::event("acl_reload", {{"outcome", "error"}, {"detail", doc.error().to_string()}});
            return doc.error();
        }
        auto snapshot = std::make_shared<const acl::AclDocument>(std::move(*doc));
        std::lock_guard lock(mutex_);
        acl_ = snapshot;
        acl_stamp_ = file_stamp(*config_.acl_file);
        for (auto& [id, session] : sessions_) {
            auto& subs = session->subscriptions;
            for (auto it = subs.begin(); it != subs.end();) {
                if (!acl::check_subscribe(*snapshot, session->username, it->first)) {
                    log::event("subscription_revoked",
                               {{"clientId", session->client_id}, {"filter", it->first.str()}});
                    it = subs.erase(it);
                } else {
                    ++it;
                }
            }
        }
        log::event("acl_reload", {{"outcome", "ok"}});
        return {};
    }

private:
    Broker() = default;

    struct OutboundUnacked {
        Bytes dup_frame;  // pre-encoded retransmission with DUP set
        net::Clock::time_point last_sent;
    };

    struct Session {
        std::string client_id;
        std::string username;  // empty = anonymous
        net::Stream stream;    // all I/O on the connection thread
        int wake_fd = -1;
        std::uint16_t keep_alive_seconds = 0;
        std::atomic<net::Clock::time_point::rep> last_inbound{0};

        std::mutex outbound_mutex;
        std::deque<Bytes> outbound;

        // guarded by the broker mutex:
        std::vector<std::pair<mqtt::TopicFilter, mqtt::QoS>> subscriptions;
        std::map<std::uint16_t, OutboundUnacked> unacked;
        std::uint16_t next_packet_id = 0;

        ~Session() {
            if (wake_fd >= 0) ::close(wake_fd);
        }

        void touch() {
            last_inbound.store(net::Clock::now().time_since_epoch().count(),
                               std::memory_order_relaxed);
        }
        net::Clock::time_point last_inbound_at() const {
            return net::Clock::time_point(
                net::Clock::duration(last_inbound.load(std::memory_order_relaxed)));
        }
    };
    using SessionPtr = std::shared_ptr<Session>;

    static Result<acl::AclDocument> load_acl_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) return make_error(Errc::io_error, "cannot open " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return acl::parse_acl(buf.str());
    }

    struct FileStamp {
        long long mtime_ns = 0;
        long long size = 0;
        bool operator==(const FileStamp&) const = default;
    };

    static FileStamp file_stamp(const std::string& path) {
        struct ::stat st{};
        if (::stat(path.c_str(), &st) != 0) return {};
        return {st.st_mtim.tv_sec * 1'000'000'000LL + st.st_mtim.tv_nsec,
                static_cast<long long>(st.st_size)};
    }

    static mqtt::QoS min_qos(mqtt::QoS a, mqtt::QoS b) {
        return (a == mqtt::QoS::at_most_once || b == mqtt::QoS::at_most_once)
                   ? mqtt::QoS::at_most_once
                   : mqtt::QoS::at_least_once;
    }

    // ------------------------------------------------------------------
    // Accept / housekeeping

    void accept_loop() {
        while (!stopping_) {
            auto fd = listener_.accept(net::after(std::chrono::milliseconds(200)));
            if (!fd) {
                if (fd.error().code == Errc::closed) break;
                continue;  // timeout slice or transient error
            }
            std::lock_guard lock(threads_mutex_);
            reap_finished_threads();
            connection_threads_.emplace_back([this, fd = *fd] { serve_connection(fd); });
        }
    }

    void reap_finished_threads() {
        for (auto it = connection_threads_.begin(); it != connection_threads_.end();) {
            if (finished_.count(it->get_id())) {
                finished_.erase(it->get_id());
                it->join();
                it = connection_threads_.erase(it);
            } else {
                ++it;
            }
        }
    }

    void housekeeping_loop() {
        auto last_acl_poll = net::Clock::now();
        while (!stopping_) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
            auto now = net::Clock::now();

            {
                std::lock_guard lock(mutex_);
                for (auto& [id, session] : sessions_) {
                    if (session->keep_alive_seconds > 0) {
                        auto limit = std::chrono::milliseconds(session->keep_alive_seconds * 1500);
                        if (now - session->last_inbound_at() > limit) {
                            log::event("keepalive_timeout", {{"clientId", session->client_id}});
                            session->stream.shutdown();
                        }
                    }
                    for (auto& [pid, unacked] : session->unacked) {
                        if (now - unacked.last_sent >=
                            std::chrono::milliseconds(config_.retransmit_interval_ms)) {
                            unacked.last_sent = now;
                            enqueue_frame(*session, unacked.dup_frame);
                        }
                    }
                }
            }

            if (config_.acl_file && policies_.authorization &&
                now - last_acl_poll >= std::chrono::milliseconds(config_.acl_poll_interval_ms)) {
                last_acl_poll = now;
                FileStamp current = file_stamp(*config_.acl_file);
                bool changed;
                {
                    std::lock_guard lock(mutex_);
                    changed = !(current == acl_stamp_);
                }
                if (changed) (void)reload_acl();
            }
        }
    }

    // ------------------------------------------------------------------
    // Connection lifecycle

    void serve_connection(int fd) {
        struct Finally {
            Broker* broker;
            ~Finally() {
                std::lock_guard lock(broker->threads_mutex_);
                broker->finished_.insert(std::this_thread::get_id());
            }
        } finally{this};

        auto stream = net::Stream::accepted(fd, policies_.encryption ? &tls_ : nullptr,
                                            net::after(std::chrono::seconds(5)));
        if (!stream) {
            log::event("handshake_failed", {{"detail", stream.error().to_string()}});
            return;
        }

        Bytes buffer;
        auto connect = read_connect(*stream, buffer);
        if (!connect) {
            if (connect.error().code == Errc::unacceptable_protocol)
                send_direct(*stream, mqtt::Packet{mqtt::Connack{
                                         false, mqtt::connack_code::unacceptable_protocol}});
            log::event("connect_rejected", {{"detail", connect.error().to_string()}});
            return;
        }

        std::uint8_t verdict = authenticate(*connect);
        if (verdict != mqtt::connack_code::accepted) {
            send_direct(*stream, mqtt::Packet{mqtt::Connack{false, verdict}});
            log::event("connect_rejected", {{"clientId", connect->client_id},
                                            {"code", std::to_string(verdict)}});
            return;
        }

        auto session = std::make_shared<Session>();
        session->client_id = connect->client_id.empty() ? assign_client_id() : connect->client_id;
        session->username = connect->username.value_or("");
        session->keep_alive_seconds = connect->keep_alive_seconds;
        session->stream = std::move(*stream);
        session->wake_fd = ::eventfd(0, EFD_CLOEXEC | EFD_NONBLOCK);
        session->touch();

        register_session(session);
        send_direct(session->stream,
                    mqtt::Packet{mqtt::Connack{false, mqtt::connack_code::accepted}});
        log::event("connect_accepted",
                   {{"clientId", session->client_id}, {"username", session->username}});

        run_session(session, buffer);

        deregister_session(session);
        session->stream.close();
        log::event("disconnect", {{"clientId", session->client_id}});
    }

    /// First packet of a connection must be CONNECT.
    Result<mqtt::Connect> read_connect(net::Stream& stream, Bytes& buffer) {
        auto deadline = net::after(std::chrono::seconds(10));
        while (true) {
            auto decoded = mqtt::decode_packet(buffer);
            if (decoded) {
                buffer.erase(buffer.begin(),
                             buffer.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
                if (auto* c = std::get_if<mqtt::Connect>(&decoded->packet)) return std::move(*c);
                return make_error(Errc::malformed_packet, "first packet not CONNECT");
            }
            if (decoded.error().code != Errc::incomplete) return decoded.error();
            if (buffer.size() > config_.max_packet_bytes)
                return make_error(Errc::packet_too_large, "CONNECT");
            std::uint8_t chunk[4096];
            auto n = stream.read_some(chunk, sizeof(chunk), deadline);
            if (!n) return n.error();
            buffer.insert(buffer.end(), chunk, chunk + *n);
        }
    }

    std::string assign_client_id() {
        static std::atomic<std::uint32_t> counter{0};
        return "anon-" + std::to_string(++counter);
    }

    void register_session(const SessionPtr& session) {
        SessionPtr displaced;
        {
            std::lock_guard lock(mutex_);
            auto it = sessions_.find(session->client_id);
            if (it != sessions_.end()) {
                displaced = it->second;
                it->second = session;
            } else {
                sessions_.emplace(session->client_id, session);
            }
        }
        if (displaced) {
            log::event("session_takeover", {{"clientId", session->client_id}});
            displaced->stream.shutdown();
        }
    }

    void deregister_session(const SessionPtr& session) {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(session->client_id);
        if (it != sessions_.end() && it->second == session) sessions_.erase(it);
    }

    void run_session(const SessionPtr& session, Bytes& buffer) {
        while (!stopping_) {
            if (!flush_outbound(*session)) return;

            auto decoded = mqtt::decode_packet(buffer);
            if (decoded) {
                buffer.erase(buffer.begin(),
                             buffer.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
                session->touch();
                if (!handle_packet(session, std::move(decoded->packet))) return;
                continue;
            }
            if (decoded.error().code != Errc::incomplete) {
                log::event("protocol_error", {{"clientId", session->client_id},
                                              {"detail", decoded.error().to_string()}});
                return;
            }
            if (buffer.size() > config_.max_packet_bytes) {
                log::event("protocol_error",
                           {{"clientId", session->client_id}, {"detail", "packet too large"}});
                return;
            }

            // try a nonblocking read first: TLS may hold buffered plaintext
            std::uint8_t chunk[4096];
            auto n = session->stream.read_some(chunk, sizeof(chunk), net::Clock::now());
            if (n) {
                buffer.insert(buffer.end(), chunk, chunk + *n);
                continue;
            }
            if (n.error().code != Errc::timeout) return;

            net::Deadline deadline;
            if (session->keep_alive_seconds > 0)
                deadline = session->last_inbound_at() +
                           std::chrono::milliseconds(session->keep_alive_seconds * 1500);
            if (!wait_readable_or_wake(*session, deadline)) {
                if (session->keep_alive_seconds > 0 &&
                    net::Clock::now() - session->last_inbound_at() >=
                        std::chrono::milliseconds(session->keep_alive_seconds * 1500)) {
                    log::event("keepalive_timeout", {{"clientId", session->client_id}});
                    return;
                }
            }
        }
    }

    /// Waits for socket data or an outbound-queue wakeup. False on timeout.
    bool wait_readable_or_wake(Session& session, net::Deadline deadline) {
        int timeout_ms = -1;
        if (deadline) {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline -
                                                                              net::Clock::now());
            timeout_ms = static_cast<int>(std::max<long long>(0, left.count()));
        }
        pollfd fds[2] = {{session.stream.fd(), POLLIN, 0}, {session.wake_fd, POLLIN, 0}};
        int rc = ::poll(fds, 2, timeout_ms);
        if (rc <= 0) return false;
        if (fds[1].revents & POLLIN) {
            std::uint64_t count = 0;
            (void)::read(session.wake_fd, &count, sizeof(count));
        }
        return true;
    }

    /// Writes every queued frame; the connection thread is the only writer.
    bool flush_outbound(Session& session) {
        std::deque<Bytes> pending;
        {
            std::lock_guard lock(session.outbound_mutex);
            pending.swap(session.outbound);
        }
        for (const auto& frame : pending) {
            auto r = session.stream.write_all(frame, net::after(std::chrono::seconds(10)));
            if (!r) return false;
        }
        return true;
    }

    void enqueue_frame(Session& session, Bytes frame) {
        {
            std::lock_guard lock(session.outbound_mutex);
            session.outbound.push_back(std::move(frame));
        }
        if (session.wake_fd >= 0) {
            std::uint64_t one = 1;
            (void)::write(session.wake_fd, &one, sizeof(one));
        }
    }

    /// Returns false when the connection must close.
    bool handle_packet(const SessionPtr& session, mqtt::Packet packet) {
        if (auto* pub = std::get_if<mqtt::Publish>(&packet)) {
            handle_publish(session, *pub);
            return true;
        }
        if (auto* ack = std::get_if<mqtt::Puback>(&packet)) {
            std::lock_guard lock(mutex_);
            session->unacked.erase(ack->packet_id);
            return true;
        }
        if (auto* sub = std::get_if<mqtt::Subscribe>(&packet)) {
            handle_subscribe(session, *sub);
            return true;
        }
        if (auto* uns = std::get_if<mqtt::Unsubscribe>(&packet)) {
            {
                std::lock_guard lock(mutex_);
                auto& subs = session->subscriptions;
                for (const auto& filter : uns->filters)
                    std::erase_if(subs, [&](const auto& entry) { return entry.first == filter; });
            }
            send_direct(session->stream, mqtt::Packet{mqtt::Unsuback{uns->packet_id}});
            return true;
        }
        if (std::holds_alternative<mqtt::Pingreq>(packet)) {
            send_direct(session->stream, mqtt::Packet{mqtt::Pingresp{}});
            return true;
        }
        if (std::holds_alternative<mqtt::Disconnect>(packet)) return false;
        // a second CONNECT, or a server-to-client packet from a client
        log::event("protocol_error", {{"clientId", session->client_id},
                                      {"detail", std::string(mqtt::packet_name(packet))}});
        return false;
    }

    // ------------------------------------------------------------------
    // Authentication / authorization

    std::uint8_t authenticate(const mqtt::Connect& connect) {
        if (policies_.authentication && !connect.username)
            return mqtt::connack_code::not_authorized;
        if (connect.username) {
            // present credentials must verify at any level
            if (!config_.password_file) return mqtt::connack_code::accepted;
            std::string password;
            if (connect.password)
                password.assign(connect.password->begin(), connect.password->end());
            if (!credentials_.verify(*connect.username, password))
                return mqtt::connack_code::bad_credentials;
        }
        return mqtt::connack_code::accepted;
    }

    bool authorize_publish(const Session& session, const mqtt::TopicName& topic) {
        if (!policies_.authorization) return true;
        return acl::check_publish(*acl_snapshot(), session.username, topic);
    }

    bool authorize_subscribe(const Session& session, const mqtt::TopicFilter& filter) {
        if (!policies_.authorization) return true;
        return acl::check_subscribe(*acl_snapshot(), session.username, filter);
    }

    std::shared_ptr<const acl::AclDocument> acl_snapshot() {
        std::lock_guard lock(mutex_);
        return acl_;
    }

    // ------------------------------------------------------------------
    // Publish routing

    void handle_publish(const SessionPtr& session, mqtt::Publish& pub) {
        bool allowed = authorize_publish(*session, pub.topic);
        log::event("publish", {{"clientId", session->client_id},
                               {"topic", pub.topic.str()},
                               {"decision", allowed ? "allow" : "deny"}});
        if (allowed) route(pub);
        // denied publishes are dropped; the QoS 1 ack still flows so the
        // sender does not retransmit
        if (pub.qos == mqtt::QoS::at_least_once)
            send_direct(session->stream, mqtt::Packet{mqtt::Puback{*pub.packet_id}});
    }

    void route(const mqtt::Publish& pub) {
        std::vector<std::pair<SessionPtr, Bytes>> deliveries;
        {
            std::lock_guard lock(mutex_);
            for (auto& [id, target] : sessions_) {
                for (const auto& [filter, granted_qos] : target->subscriptions) {
                    if (!mqtt::filter_matches(filter, pub.topic)) continue;
                    auto qos = min_qos(pub.qos, granted_qos);
                    mqtt::Publish out{pub.topic, pub.payload, qos, std::nullopt, false, false};
                    if (qos == mqtt::QoS::at_least_once) {
                        if (++target->next_packet_id == 0) ++target->next_packet_id;
                        out.packet_id = target->next_packet_id;
                        mqtt::Publish dup = out;
                        dup.dup = true;
                        auto dup_frame = mqtt::encode_packet(mqtt::Packet{std::move(dup)});
                        if (dup_frame)
                            target->unacked[*out.packet_id] =
                                OutboundUnacked{std::move(*dup_frame), net::Clock::now()};
                    }
                    auto frame = mqtt::encode_packet(mqtt::Packet{std::move(out)});
                    if (frame) deliveries.emplace_back(target, std::move(*frame));
                }
            }
        }
        for (auto& [target, frame] : deliveries) enqueue_frame(*target, std::move(frame));
    }

    // ------------------------------------------------------------------
    // Subscribe

    void handle_subscribe(const SessionPtr& session, mqtt::Subscribe& sub) {
        mqtt::Suback ack{sub.packet_id, {}};
        for (auto& [filter, qos] : sub.entries) {
            bool allowed = authorize_subscribe(*session, filter);
            log::event("subscribe", {{"clientId", session->client_id},
                                     {"filter", filter.str()},
                                     {"decision", allowed ? "allow" : "deny"}});
            if (!allowed) {
                ack.return_codes.push_back(mqtt::kSubackFailure);
                continue;
            }
            ack.return_codes.push_back(static_cast<std::uint8_t>(qos));
            std::lock_guard lock(mutex_);
            auto& subs = session->subscriptions;
            auto it = std::find_if(subs.begin(), subs.end(),
                                   [&](const auto& entry) { return entry.first == filter; });
            if (it != subs.end())
                it->second = qos;  // re-subscribe replaces the granted QoS
            else
                subs.emplace_back(filter, qos);
        }
        send_direct(session->stream, mqtt::Packet{std::move(ack)});
    }

    // only safe on the connection's own thread
    void send_direct(net::Stream& stream, const mqtt::Packet& packet) {
        auto frame = mqtt::encode_packet(packet);
        if (frame) (void)stream.write_all(*frame, net::after(std::chrono::seconds(10)));
    }

    BrokerConfig config_;
    teds::PolicySet policies_;
    net::TlsContext tls_;
    auth::CredentialStore credentials_;
    net::TcpListener listener_;

    std::mutex mutex_;  // sessions, subscriptions, unacked, acl snapshot
    std::map<std::string, SessionPtr> sessions_;
    std::shared_ptr<const acl::AclDocument> acl_;
    FileStamp acl_stamp_;

    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    std::thread housekeeping_thread_;
    std::mutex threads_mutex_;
    std::list<std::thread> connection_threads_;
    std::set<std::thread::id> finished_;
};

}  // namespace p1451::broker
