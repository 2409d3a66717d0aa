#pragma once

#include <chrono>
#include <optional>
#include <string>

#include <p1451/acs.hpp>
#include <p1451/client.hpp>
#include <p1451/common.hpp>
#include <p1451/log.hpp>
#include <p1451/netsvc.hpp>
#include <p1451/teds.hpp>
#include <p1451/teds_text.hpp>

namespace p1451::app {

struct ConnectionOptions {
    std::string broker_host = "127.0.0.1";
    std::uint16_t broker_port = 1883;
    std::optional<std::string> username;
    std::optional<std::string> password;
    bool tls = false;
    std::optional<std::string> ca_cert;
};

struct ReadTedsOptions {
    ConnectionOptions connection;
    netsvc::Uuid1451 app_id = netsvc::Uuid1451::random();
    netsvc::Uuid1451 ncap_id;
    netsvc::Uuid1451 tim_id;  // zero selects the NCAP-level TEDS
    std::uint16_t channel_id = 0;
    std::uint8_t access_code = teds::kSecurityTedsAccessCode;
    std::uint32_t offset = 0;
    std::chrono::milliseconds timeout{2000};
};

struct ReadTedsOutcome {
    netsvc::ReadTedsReply reply;
    std::optional<teds::SecurityTeds> decoded;  // set when access code 16 at offset 0
};

/// Subscribe to the reply topic, publish the command, wait for the first
/// correlated reply until the deadline. Uncorrelated replies are ignored.
inline Result<ReadTedsOutcome> read_teds_flow(const ReadTedsOptions& options) {
    client::ClientConfig cc;
    cc.host = options.connection.broker_host;
    cc.port = options.connection.broker_port;
    cc.client_id = "app-" + options.app_id.hex().substr(0, 8);
    cc.username = options.connection.username;
    cc.password = options.connection.password;
    cc.tls = options.connection.tls;
    cc.ca_cert = options.connection.ca_cert;

    auto connected = client::MqttClient::connect(cc);
    if (!connected) return connected.error();
    auto& mqtt_client = *connected;

    auto reply_filter = mqtt::TopicFilter::parse(netsvc::reply_topic(options.app_id).str()).value();
    if (auto sub = mqtt_client.subscribe(reply_filter, mqtt::QoS::at_least_once,
                                         net::after(std::chrono::seconds(5)));
        !sub)
        return sub.error();

    netsvc::ReadTedsCommand cmd;
    cmd.app_id = options.app_id;
    cmd.ncap_id = options.ncap_id;
    cmd.tim_id = options.tim_id;
    cmd.channel_id = options.channel_id;
    cmd.teds_access_code = options.access_code;
    cmd.teds_offset = options.offset;
    cmd.timeout = {static_cast<std::uint32_t>(options.timeout.count() / 1000),
                   static_cast<std::uint32_t>((options.timeout.count() % 1000) * 1'000'000)};

    if (auto pub = mqtt_client.publish(netsvc::command_topic(options.ncap_id),
                                       netsvc::encode_command(cmd), mqtt::QoS::at_least_once,
                                       net::after(std::chrono::seconds(5)));
        !pub)
        return pub.error();

    auto deadline = net::after(options.timeout);
    while (true) {
        auto msg = mqtt_client.poll(deadline);
        if (!msg) {
            mqtt_client.disconnect();
            return msg.error();  // Errc::timeout once the deadline passes
        }
        auto reply = netsvc::decode_reply(msg->payload);
        if (!reply) {
            log::event("app_bad_reply", {{"detail", reply.error().to_string()}});
            continue;
        }
        if (!netsvc::correlate(cmd, *reply)) continue;

        mqtt_client.disconnect();
        ReadTedsOutcome outcome{std::move(*reply), std::nullopt};
        if (outcome.reply.error_code != netsvc::error_code::success)
            return make_error(Errc::denied, "reply errorCode " +
                                                std::to_string(outcome.reply.error_code));
        if (options.access_code == teds::kSecurityTedsAccessCode && options.offset == 0) {
            auto decoded =
                teds::decode_security_teds(teds::RawTedsBlock{outcome.reply.raw_teds_block});
            if (!decoded) return decoded.error();
            outcome.decoded = std::move(*decoded);
        }
        return outcome;
    }
}

struct AclUpdateOptions {
    ConnectionOptions connection;
    std::string token;
    acs::Op op = acs::Op::add;
    std::string user;
    acl::Access access = acl::Access::read;
    std::string filter;
    std::chrono::milliseconds result_timeout{5000};
};

/// Publishes one update request and waits for the matching result.
inline Result<acs::AclUpdateResult> acl_update_flow(const AclUpdateOptions& options) {
    auto filter = mqtt::TopicFilter::parse(options.filter);
    if (!filter) return filter.error();

    client::ClientConfig cc;
    cc.host = options.connection.broker_host;
    cc.port = options.connection.broker_port;
    cc.client_id = "acl-update-" + netsvc::Uuid1451::random().hex().substr(0, 8);
    cc.username = options.connection.username;
    cc.password = options.connection.password;
    cc.tls = options.connection.tls;
    cc.ca_cert = options.connection.ca_cert;

    auto connected = client::MqttClient::connect(cc);
    if (!connected) return connected.error();
    auto& mqtt_client = *connected;

    auto result_filter = mqtt::TopicFilter::parse(std::string(acs::kResultTopic)).value();
    if (auto sub = mqtt_client.subscribe(result_filter, mqtt::QoS::at_least_once,
                                         net::after(std::chrono::seconds(5)));
        !sub)
        return sub.error();

    acs::AclUpdateRequest req;
    req.request_id = "r-" + netsvc::Uuid1451::random().hex().substr(0, 16);
    req.token = options.token;
    req.op = options.op;
    req.user = options.user;
    req.access = options.access;
    req.filter = std::move(*filter);

    std::string request_text = acs::serialize_request(req);
    auto config_topic = mqtt::TopicName::parse(std::string(acs::kConfigTopic)).value();
    if (auto pub = mqtt_client.publish(config_topic,
                                       Bytes(request_text.begin(), request_text.end()),
                                       mqtt::QoS::at_least_once, net::after(std::chrono::seconds(5)));
        !pub)
        return pub.error();

    auto deadline = net::after(options.result_timeout);
    while (true) {
        auto msg = mqtt_client.poll(deadline);
        if (!msg) {
            mqtt_client.disconnect();
            return msg.error();
        }
        auto result = acs::parse_result(std::string(msg->payload.begin(), msg->payload.end()));
        if (!result) continue;
        if (result->request_id != req.request_id) continue;
        mqtt_client.disconnect();
        return *result;
    }
}

}  // namespace p1451::app
