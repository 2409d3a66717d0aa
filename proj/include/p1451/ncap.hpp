#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <tuple>

#include <p1451/client.hpp>
#include <p1451/common.hpp>
#include <p1451/log.hpp>
#include <p1451/netsvc.hpp>
#include <p1451/teds.hpp>

namespace p1451::ncap {

/// TEDS blocks keyed by (timId, channelId, tedsAccessCode). The NCAP-level
/// security TEDS lives under timId 0, channelId 0.
class TedsRepository {
public:
    using Key = std::tuple<netsvc::Uuid1451, std::uint16_t, std::uint8_t>;

    Result<void> register_teds(const netsvc::Uuid1451& tim_id, std::uint16_t channel_id,
                               std::uint8_t access_code, teds::RawTedsBlock block) {
        if (access_code == teds::kSecurityTedsAccessCode) {
            auto decoded = teds::decode_security_teds(block);
            if (!decoded) return decoded.error();
        } else if (block.octets.size() >= 6) {
            // other TEDS classes are stored opaquely but must carry a sound envelope
            std::uint16_t stored = static_cast<std::uint16_t>(
                block.octets[block.octets.size() - 2] << 8 | block.octets.back());
            if (stored !=
                teds::compute_checksum(BytesView(block.octets).first(block.octets.size() - 2)))
                return make_error(Errc::checksum_mismatch);
        } else {
            return make_error(Errc::truncated);
        }
        blocks_[key_of(tim_id, channel_id, access_code)] = std::move(block);  // latest wins
        return {};
    }

    std::optional<teds::RawTedsBlock> find(const netsvc::Uuid1451& tim_id,
                                           std::uint16_t channel_id,
                                           std::uint8_t access_code) const {
        auto it = blocks_.find(key_of(tim_id, channel_id, access_code));
        if (it == blocks_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return blocks_.size(); }

private:
    struct KeyLess {
        bool operator()(const Key& a, const Key& b) const {
            const auto& [ia, ca, aa] = a;
            const auto& [ib, cb, ab] = b;
            if (ia.octets != ib.octets) return ia.octets < ib.octets;
            if (ca != cb) return ca < cb;
            return aa < ab;
        }
    };
    static Key key_of(const netsvc::Uuid1451& tim_id, std::uint16_t channel_id,
                      std::uint8_t access_code) {
        return {tim_id, channel_id, access_code};
    }

    std::map<Key, teds::RawTedsBlock, KeyLess> blocks_;
};

/// Pure request handler: echoes ids, slices the stored block from the
/// requested offset, and reports misses through error codes.
inline netsvc::ReadTedsReply handle_read_teds(const netsvc::ReadTedsCommand& cmd,
                                              const TedsRepository& repo,
                                              const netsvc::Uuid1451& ncap_id) {
    netsvc::ReadTedsReply rep;
    rep.app_id = cmd.app_id;
    rep.ncap_id = ncap_id;
    rep.teds_offset = cmd.teds_offset;

    if (cmd.ncap_id != ncap_id) {
        rep.error_code = netsvc::error_code::unknown_tim_or_channel;
        return rep;
    }
    auto block = repo.find(cmd.tim_id, cmd.channel_id, cmd.teds_access_code);
    if (!block) {
        rep.error_code = netsvc::error_code::teds_not_found;
        return rep;
    }
    if (cmd.teds_offset >= block->octets.size()) {
        rep.error_code = netsvc::error_code::invalid_offset;
        return rep;
    }
    rep.error_code = netsvc::error_code::success;
    rep.tim_id = cmd.tim_id;
    rep.channel_id = cmd.channel_id;
    rep.raw_teds_block.assign(block->octets.begin() + cmd.teds_offset, block->octets.end());
    return rep;
}

struct NcapConfig {
    netsvc::Uuid1451 ncap_id;
    std::string broker_host = "127.0.0.1";
    std::uint16_t broker_port = 1883;
    std::optional<std::string> username;
    std::optional<std::string> password;
    bool tls = false;
    std::optional<std::string> ca_cert;
};

/// Subscribes to the NCAP's command topic and answers read-TEDS commands.
/// Reconnects with backoff; commands are handled one at a time in arrival
/// order.
class NcapService {
public:
    NcapService(NcapConfig config, TedsRepository repo)
        : config_(std::move(config)), repo_(std::move(repo)) {
        if (config_.ncap_id.is_zero())
            log::event("ncap_warning", {{"detail", "ncapId is zero"}});
    }

    ~NcapService() { stop(); }

    void start() {
        running_ = true;
        thread_ = std::thread([this] { serve(); });
    }

    void stop() {
        running_ = false;
        if (thread_.joinable()) thread_.join();
    }

    /// Runs the subscribe/reply loop until stop(). Returns only on stop.
    void serve() {
        auto backoff = std::chrono::milliseconds(100);
        while (running_) {
            client::ClientConfig cc;
            cc.host = config_.broker_host;
            cc.port = config_.broker_port;
            cc.client_id = "ncap-" + config_.ncap_id.hex().substr(0, 8);
            cc.username = config_.username;
            cc.password = config_.password;
            cc.tls = config_.tls;
            cc.ca_cert = config_.ca_cert;

            auto connected = client::MqttClient::connect(cc);
            if (!connected) {
                log::event("ncap_connect_failed", {{"detail", connected.error().to_string()}});
                std::this_thread::sleep_for(backoff);
                backoff = std::min(backoff * 2, std::chrono::milliseconds(2000));
                continue;
            }
            auto& mqtt_client = *connected;
            auto topic = netsvc::command_topic(config_.ncap_id);
            auto filter = mqtt::TopicFilter::parse(topic.str()).value();
            auto sub = mqtt_client.subscribe(filter, mqtt::QoS::at_least_once,
                                             net::after(std::chrono::seconds(5)));
            if (!sub) {
                log::event("ncap_subscribe_failed", {{"detail", sub.error().to_string()}});
                mqtt_client.disconnect();
                std::this_thread::sleep_for(backoff);
                backoff = std::min(backoff * 2, std::chrono::milliseconds(2000));
                continue;
            }
            backoff = std::chrono::milliseconds(100);
            log::event("ncap_ready", {{"topic", topic.str()}});

            while (running_) {
                auto msg = mqtt_client.poll(net::after(std::chrono::milliseconds(200)));
                if (!msg) {
                    if (msg.error().code == Errc::timeout) continue;
                    log::event("ncap_connection_lost", {{"detail", msg.error().to_string()}});
                    break;
                }
                handle_message(mqtt_client, *msg);
            }
            mqtt_client.disconnect();
        }
    }

private:
    void handle_message(client::MqttClient& mqtt_client, const client::InboundMessage& msg) {
        auto cmd = netsvc::decode_command(msg.payload);
        if (!cmd) {
            log::event("ncap_bad_command", {{"detail", cmd.error().to_string()}});
            return;  // the APP's timeout covers the loss
        }
        auto reply = handle_read_teds(*cmd, repo_, config_.ncap_id);
        auto encoded = netsvc::encode_reply(reply);
        if (!encoded) {
            log::event("ncap_reply_error", {{"detail", encoded.error().to_string()}});
            return;
        }
        auto pub = mqtt_client.publish(netsvc::reply_topic(cmd->app_id), std::move(*encoded),
                                       mqtt::QoS::at_least_once,
                                       net::after(std::chrono::seconds(5)));
        if (!pub) log::event("ncap_reply_error", {{"detail", pub.error().to_string()}});
        else
            log::event("ncap_replied", {{"appId", cmd->app_id.hex()},
                                        {"errorCode", std::to_string(reply.error_code)}});
    }

    NcapConfig config_;
    TedsRepository repo_;
    std::atomic<bool> running_{false};
    std::thread thread_;
};

}  // namespace p1451::ncap
