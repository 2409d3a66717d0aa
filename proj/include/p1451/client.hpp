#pragma once

#include <deque>
#include <optional>
#include <string>
#include <utility>

#include <p1451/common.hpp>
#include <p1451/mqtt.hpp>
#include <p1451/net.hpp>

namespace p1451::client {

struct ClientConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = 1883;
    std::string client_id;
    std::optional<std::string> username;
    std::optional<std::string> password;
    bool tls = false;
    std::optional<std::string> ca_cert;  // enables peer verification
    std::uint16_t keep_alive_seconds = 30;
    std::chrono::milliseconds connect_timeout{5000};
};

struct InboundMessage {
    mqtt::TopicName topic;
    Bytes payload;
    mqtt::QoS qos = mqtt::QoS::at_most_once;
};

/// Synchronous MQTT 3.1.1 client. All calls run on the caller's thread;
/// inbound publishes arriving while a control exchange is pending are
/// queued for the next poll().
class MqttClient {
public:
    static Result<MqttClient> connect(const ClientConfig& config) {
        MqttClient c;
        c.config_ = config;
        auto deadline = net::after(config.connect_timeout);

        const net::TlsContext* tls = nullptr;
        if (config.tls) {
            auto ctx = net::TlsContext::client(config.ca_cert);
            if (!ctx) return ctx.error();
            c.tls_ = std::move(*ctx);
            tls = &c.tls_;
        }
        auto stream = net::Stream::connect(config.host, config.port, tls, deadline);
        if (!stream) return stream.error();
        c.stream_ = std::move(*stream);

        mqtt::Connect pkt;
        pkt.client_id = config.client_id;
        pkt.username = config.username;
        if (config.password)
            pkt.password = Bytes(config.password->begin(), config.password->end());
        pkt.keep_alive_seconds = config.keep_alive_seconds;
        pkt.clean_session = true;
        if (auto sent = c.send(mqtt::Packet{std::move(pkt)}, deadline); !sent) return sent.error();

        auto ack = c.wait_for<mqtt::Connack>(deadline, [](const mqtt::Connack&) { return true; });
        if (!ack) return ack.error();
        if (ack->return_code != mqtt::connack_code::accepted)
            return make_error(Errc::auth_failed,
                              "CONNACK return code " + std::to_string(ack->return_code));
        return c;
    }

    Result<void> subscribe(const mqtt::TopicFilter& filter, mqtt::QoS qos, net::Deadline deadline) {
        std::uint16_t id = next_packet_id();
        mqtt::Subscribe sub{id, {{filter, qos}}};
        if (auto sent = send(mqtt::Packet{std::move(sub)}, deadline); !sent) return sent.error();
        auto ack = wait_for<mqtt::Suback>(
            deadline, [id](const mqtt::Suback& s) { return s.packet_id == id; });
        if (!ack) return ack.error();
        if (ack->return_codes.size() != 1)
            return make_error(Errc::malformed_packet, "SUBACK entry count");
        if (ack->return_codes[0] == mqtt::kSubackFailure)
            return make_error(Errc::denied, "subscription refused: " + filter.str());
        return {};
    }

    Result<void> unsubscribe(const mqtt::TopicFilter& filter, net::Deadline deadline) {
        std::uint16_t id = next_packet_id();
        mqtt::Unsubscribe uns{id, {filter}};
        if (auto sent = send(mqtt::Packet{std::move(uns)}, deadline); !sent) return sent.error();
        auto ack = wait_for<mqtt::Unsuback>(
            deadline, [id](const mqtt::Unsuback& u) { return u.packet_id == id; });
        if (!ack) return ack.error();
        return {};
    }

    /// QoS 1 publishes block until the broker's PUBACK.
    Result<void> publish(const mqtt::TopicName& topic, Bytes payload, mqtt::QoS qos,
                         net::Deadline deadline) {
        mqtt::Publish pub{topic, std::move(payload), qos, std::nullopt, false, false};
        std::uint16_t id = 0;
        if (qos == mqtt::QoS::at_least_once) {
            id = next_packet_id();
            pub.packet_id = id;
        }
        if (auto sent = send(mqtt::Packet{std::move(pub)}, deadline); !sent) return sent.error();
        if (qos == mqtt::QoS::at_least_once) {
            auto ack = wait_for<mqtt::Puback>(
                deadline, [id](const mqtt::Puback& p) { return p.packet_id == id; });
            if (!ack) return ack.error();
        }
        return {};
    }

    /// Returns the next inbound publish, or Errc::timeout at the deadline.
    Result<InboundMessage> poll(net::Deadline deadline) {
        while (true) {
            if (!inbound_.empty()) {
                InboundMessage msg = std::move(inbound_.front());
                inbound_.pop_front();
                return msg;
            }
            auto pkt = read_packet(deadline);
            if (!pkt) return pkt.error();
            if (auto h = handle_inbound(std::move(*pkt), deadline); !h) return h.error();
        }
    }

    void disconnect() {
        if (stream_.valid()) {
            auto frame = mqtt::encode_packet(mqtt::Packet{mqtt::Disconnect{}});
            if (frame) (void)stream_.write_all(*frame, net::after(std::chrono::milliseconds(500)));
            stream_.close();
        }
    }

    bool connected() const { return stream_.valid(); }
    const std::string& client_id() const { return config_.client_id; }

private:
    Result<void> send(const mqtt::Packet& packet, net::Deadline deadline) {
        auto frame = mqtt::encode_packet(packet);
        if (!frame) return frame.error();
        last_send_ = net::Clock::now();
        return stream_.write_all(*frame, deadline);
    }

    std::uint16_t next_packet_id() {
        if (++packet_id_ == 0) ++packet_id_;
        return packet_id_;
    }

    /// Reads one packet, sending PINGREQ at half the keep-alive when idle.
    Result<mqtt::Packet> read_packet(net::Deadline deadline) {
        while (true) {
            auto decoded = mqtt::decode_packet(buffer_);
            if (decoded) {
                buffer_.erase(buffer_.begin(),
                              buffer_.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
                return std::move(decoded->packet);
            }
            if (decoded.error().code != Errc::incomplete) return decoded.error();

            net::Deadline slice = deadline;
            if (config_.keep_alive_seconds > 0) {
                auto ping_at = last_send_ + std::chrono::seconds(config_.keep_alive_seconds) / 2;
                if (!slice || ping_at < *slice) slice = ping_at;
            }
            std::uint8_t chunk[4096];
            auto n = stream_.read_some(chunk, sizeof(chunk), slice);
            if (n) {
                buffer_.insert(buffer_.end(), chunk, chunk + *n);
                continue;
            }
            if (n.error().code != Errc::timeout) return n.error();
            if (net::detail::expired(deadline)) return make_error(Errc::timeout);
            // idle slice: keep the connection alive and retry
            if (auto ping = send(mqtt::Packet{mqtt::Pingreq{}}, deadline); !ping)
                return ping.error();
        }
    }

    Result<void> handle_inbound(mqtt::Packet packet, net::Deadline deadline) {
        if (auto* pub = std::get_if<mqtt::Publish>(&packet)) {
            if (pub->qos == mqtt::QoS::at_least_once) {
                if (auto ack = send(mqtt::Packet{mqtt::Puback{*pub->packet_id}}, deadline); !ack)
                    return ack.error();
            }
            inbound_.push_back({pub->topic, std::move(pub->payload), pub->qos});
        }
        // PINGRESP and duplicate acks are absorbed silently
        return {};
    }

    template <typename T, typename Pred>
    Result<T> wait_for(net::Deadline deadline, Pred matches) {
        while (true) {
            auto pkt = read_packet(deadline);
            if (!pkt) return pkt.error();
            if (auto* hit = std::get_if<T>(&*pkt); hit && matches(*hit)) return std::move(*hit);
            if (auto h = handle_inbound(std::move(*pkt), deadline); !h) return h.error();
        }
    }

    ClientConfig config_;
    net::TlsContext tls_;
    net::Stream stream_;
    Bytes buffer_;
    std::deque<InboundMessage> inbound_;
    std::uint16_t packet_id_ = 0;
    net::Clock::time_point last_send_ = net::Clock::now();
};

}  // namespace p1451::client
