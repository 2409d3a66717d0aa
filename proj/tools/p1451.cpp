// p1451 — IEEE P1451.1.6 security toolkit: broker, NCAP and MQTT-ACS
// launchers, the APP-side read-teds / acl-update flows, and offline
// security-TEDS tooling.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include <p1451/acs.hpp>
#include <p1451/app.hpp>
#include <p1451/broker.hpp>
#include <p1451/common.hpp>
#include <p1451/log.hpp>
#include <p1451/ncap.hpp>
#include <p1451/netsvc.hpp>
#include <p1451/teds.hpp>
#include <p1451/teds_text.hpp>

namespace {

// Documented exit statuses (see README):
//   0 success, 1 usage or I/O error, 2 timeout, 3 authentication/connect
//   failure, 4 protocol error, 5 TEDS decode error, 6 denied, 7 invalid,
//   8 service error.
enum ExitStatus : int {
    exit_ok = 0,
    exit_error = 1,
    exit_timeout = 2,
    exit_auth = 3,
    exit_protocol = 4,
    exit_decode = 5,
    exit_denied = 6,
    exit_invalid = 7,
    exit_service_error = 8,
};

volatile std::sig_atomic_t g_stop = 0;
volatile std::sig_atomic_t g_hup = 0;

void handle_signal(int sig) {
    if (sig == SIGHUP)
        g_hup = 1;
    else
        g_stop = 1;
}

void install_signal_handlers() {
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::signal(SIGHUP, handle_signal);
}

int exit_code_for(const p1451::Error& err) {
    switch (err.code) {
        case p1451::Errc::timeout:
            return exit_timeout;
        case p1451::Errc::auth_failed:
            return exit_auth;
        case p1451::Errc::denied:
            return exit_protocol;  // reply errorCode != 0 or refused subscription
        case p1451::Errc::checksum_mismatch:
        case p1451::Errc::truncated:
        case p1451::Errc::length_mismatch:
        case p1451::Errc::bad_field:
        case p1451::Errc::reserved_code:
            return exit_decode;
        case p1451::Errc::malformed_packet:
        case p1451::Errc::unknown_packet_type:
        case p1451::Errc::unacceptable_protocol:
        case p1451::Errc::not_a_command:
        case p1451::Errc::not_a_reply:
            return exit_protocol;
        default:
            return exit_error;
    }
}

struct ConnectionFlags {
    std::string broker = "127.0.0.1:1883";
    std::string username;
    std::string password;
    bool tls = false;
    std::string ca_cert;

    void attach(CLI::App& cmd) {
        cmd.add_option("--broker", broker, "Broker endpoint host:port")
            ->capture_default_str();
        cmd.add_option("--username", username, "MQTT username");
        cmd.add_option("--password", password, "MQTT password");
        cmd.add_flag("--tls", tls, "Connect over TLS");
        cmd.add_option("--ca-cert", ca_cert,
                       "CA certificate for peer verification (TLS implied)");
    }

    p1451::Result<p1451::app::ConnectionOptions> resolve() const {
        auto ep = p1451::net::parse_endpoint(broker);
        if (!ep) return ep.error();
        p1451::app::ConnectionOptions opts;
        opts.broker_host = ep->host;
        opts.broker_port = ep->port;
        if (!username.empty()) opts.username = username;
        if (!password.empty()) opts.password = password;
        opts.tls = tls || !ca_cert.empty();
        if (!ca_cert.empty()) opts.ca_cert = ca_cert;
        return opts;
    }
};

int fail(const p1451::Error& err) {
    std::cerr << "error: " << err.to_string() << "\n";
    return exit_code_for(err);
}

p1451::Result<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return p1451::make_error(p1451::Errc::io_error, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---------------------------------------------------------------------------

int run_broker(const std::string& listen, const std::string& level_text,
               const std::string& passwords, const std::string& acl, const std::string& tls_cert,
               const std::string& tls_key, int acl_poll_ms) {
    auto ep = p1451::net::parse_endpoint(listen);
    if (!ep) return fail(ep.error());
    if (level_text.size() != 1) return fail({p1451::Errc::invalid_argument, "--level N|A|B|C|D|E"});
    auto level = p1451::teds::parse_level(static_cast<std::uint8_t>(level_text[0]));
    if (!level) return fail(level.error());

    p1451::broker::BrokerConfig config;
    config.listen_host = ep->host;
    config.listen_port = ep->port;
    config.security_level = *level;
    if (!passwords.empty()) config.password_file = passwords;
    if (!acl.empty()) config.acl_file = acl;
    if (!tls_cert.empty()) config.tls_cert = tls_cert;
    if (!tls_key.empty()) config.tls_key = tls_key;
    config.acl_poll_interval_ms = acl_poll_ms;

    auto broker = p1451::broker::Broker::start(std::move(config));
    if (!broker) return fail(broker.error());
    std::cout << "broker listening on " << ep->host << ":" << (*broker)->port() << std::endl;

    install_signal_handlers();
    while (!g_stop) {
        if (g_hup) {
            g_hup = 0;
            (void)(*broker)->reload_acl();
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    (*broker)->stop();
    return exit_ok;
}

int run_ncap(const ConnectionFlags& conn, const std::string& ncap_id_hex,
             const std::string& teds_path) {
    auto opts = conn.resolve();
    if (!opts) return fail(opts.error());
    auto ncap_id = p1451::netsvc::Uuid1451::parse_hex(ncap_id_hex);
    if (!ncap_id) return fail(ncap_id.error());

    auto description = p1451::teds::load_description(teds_path);
    if (!description) return fail(description.error());
    auto block = p1451::teds::encode_security_teds(*description);
    if (!block) return fail(block.error());

    p1451::ncap::TedsRepository repo;
    if (auto reg = repo.register_teds(p1451::netsvc::Uuid1451::zero(), 0,
                                      p1451::teds::kSecurityTedsAccessCode, std::move(*block));
        !reg)
        return fail(reg.error());

    p1451::ncap::NcapConfig config;
    config.ncap_id = *ncap_id;
    config.broker_host = opts->broker_host;
    config.broker_port = opts->broker_port;
    config.username = opts->username;
    config.password = opts->password;
    config.tls = opts->tls;
    config.ca_cert = opts->ca_cert;

    p1451::ncap::NcapService service(std::move(config), std::move(repo));
    service.start();
    std::cout << "ncap " << ncap_id->hex() << " serving" << std::endl;

    install_signal_handlers();
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    return exit_ok;
}

int run_acs(const ConnectionFlags& conn, const std::string& tokens_path,
            const std::string& acl_path) {
    auto opts = conn.resolve();
    if (!opts) return fail(opts.error());

    p1451::acs::AcsConfig config;
    config.broker_host = opts->broker_host;
    config.broker_port = opts->broker_port;
    config.username = opts->username;
    config.password = opts->password;
    config.tls = opts->tls;
    config.ca_cert = opts->ca_cert;
    config.registry_path = tokens_path;
    config.acl_path = acl_path;

    auto service = p1451::acs::AcsService::create(std::move(config));
    if (!service) return fail(service.error());
    service->start();
    std::cout << "mqtt-acs serving" << std::endl;

    install_signal_handlers();
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service->stop();
    return exit_ok;
}

int run_read_teds(const ConnectionFlags& conn, const std::string& ncap_id_hex,
                  const std::string& app_id_hex, int access_code, long offset, double timeout_s) {
    auto opts = conn.resolve();
    if (!opts) return fail(opts.error());
    auto ncap_id = p1451::netsvc::Uuid1451::parse_hex(ncap_id_hex);
    if (!ncap_id) return fail(ncap_id.error());

    p1451::app::ReadTedsOptions options;
    options.connection = *opts;
    options.ncap_id = *ncap_id;
    if (!app_id_hex.empty()) {
        auto app_id = p1451::netsvc::Uuid1451::parse_hex(app_id_hex);
        if (!app_id) return fail(app_id.error());
        options.app_id = *app_id;
    }
    options.access_code = static_cast<std::uint8_t>(access_code);
    options.offset = static_cast<std::uint32_t>(offset);
    options.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000));

    auto outcome = p1451::app::read_teds_flow(options);
    if (!outcome) return fail(outcome.error());
    if (outcome->decoded) {
        std::cout << p1451::teds::pretty_print(*outcome->decoded);
    } else {
        std::cout << "rawTEDSBlock (" << outcome->reply.raw_teds_block.size()
                  << " octets): " << p1451::to_hex(outcome->reply.raw_teds_block) << "\n";
    }
    return exit_ok;
}

int run_acl_update(const ConnectionFlags& conn, const std::string& token, const std::string& op,
                   const std::string& user, const std::string& access, const std::string& topic,
                   double result_timeout_s) {
    auto opts = conn.resolve();
    if (!opts) return fail(opts.error());

    p1451::app::AclUpdateOptions options;
    options.connection = *opts;
    options.token = token;
    if (op == "add")
        options.op = p1451::acs::Op::add;
    else if (op == "remove")
        options.op = p1451::acs::Op::remove;
    else
        return fail({p1451::Errc::invalid_argument, "--op add|remove"});
    options.user = user;
    auto mode = p1451::acl::parse_access(access);
    if (!mode) return fail(mode.error());
    options.access = *mode;
    options.filter = topic;
    options.result_timeout =
        std::chrono::milliseconds(static_cast<long long>(result_timeout_s * 1000));

    auto result = p1451::app::acl_update_flow(options);
    if (!result) return fail(result.error());
    std::cout << "status: " << p1451::acs::status_name(result->status);
    if (!result->detail.empty()) std::cout << " (" << result->detail << ")";
    std::cout << std::endl;
    switch (result->status) {
        case p1451::acs::Status::ok: return exit_ok;
        case p1451::acs::Status::denied: return exit_denied;
        case p1451::acs::Status::invalid: return exit_invalid;
        case p1451::acs::Status::error: return exit_service_error;
    }
    return exit_error;
}

int run_encode_teds(const std::string& in_path, const std::string& out_path) {
    auto description = p1451::teds::load_description(in_path);
    if (!description) return fail(description.error());
    auto block = p1451::teds::encode_security_teds(*description);
    if (!block) return fail(block.error());
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) return fail({p1451::Errc::io_error, "cannot open " + out_path});
    out.write(reinterpret_cast<const char*>(block->octets.data()),
              static_cast<std::streamsize>(block->octets.size()));
    if (!out) return fail({p1451::Errc::io_error, "short write to " + out_path});
    std::cout << "wrote " << block->octets.size() << " octets to " << out_path << std::endl;
    return exit_ok;
}

int run_decode_teds(const std::string& in_path) {
    auto raw = read_file(in_path);
    if (!raw) return fail(raw.error());
    p1451::teds::RawTedsBlock block{p1451::Bytes(raw->begin(), raw->end())};
    std::vector<std::string> warnings;
    auto decoded = p1451::teds::decode_security_teds(block, &warnings);
    if (!decoded) return fail(decoded.error());
    std::cout << p1451::teds::pretty_print(*decoded);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IEEE P1451.1.6 MQTT security toolkit"};
    app.require_subcommand(1);

    // broker
    auto* broker_cmd = app.add_subcommand("broker", "Run the MQTT broker");
    std::string listen = "127.0.0.1:1883";
    std::string level = "N";
    std::string passwords, acl, tls_cert, tls_key;
    int acl_poll_ms = 500;
    broker_cmd->add_option("--listen", listen, "Listen endpoint host:port")
        ->capture_default_str();
    broker_cmd->add_option("--level", level, "Security level N|A|B|C|D|E")
        ->capture_default_str();
    broker_cmd->add_option("--passwords", passwords, "Password file (levels B/C/D/E)");
    broker_cmd->add_option("--acl", acl, "ACL file (levels D/E)");
    broker_cmd->add_option("--tls-cert", tls_cert, "Server certificate (levels A/C/E)");
    broker_cmd->add_option("--tls-key", tls_key, "Server private key (levels A/C/E)");
    broker_cmd->add_option("--acl-poll-interval", acl_poll_ms,
                           "ACL file poll interval in milliseconds")
        ->capture_default_str();

    // ncap
    auto* ncap_cmd = app.add_subcommand("ncap", "Run an NCAP simulator");
    ConnectionFlags ncap_conn;
    ncap_conn.attach(*ncap_cmd);
    std::string ncap_id_hex, ncap_teds;
    ncap_cmd->add_option("--ncap-id", ncap_id_hex, "NCAP id, 32 hex characters")->required();
    ncap_cmd->add_option("--teds", ncap_teds, "Security TEDS description file")->required();

    // acs
    auto* acs_cmd = app.add_subcommand("acs", "Run the MQTT-ACS access-control service");
    ConnectionFlags acs_conn;
    acs_conn.attach(*acs_cmd);
    std::string tokens_path, acs_acl_path;
    acs_cmd->add_option("--tokens", tokens_path, "Access-token registry file")->required();
    acs_cmd->add_option("--acl", acs_acl_path, "ACL file to maintain")->required();

    // read-teds
    auto* read_cmd = app.add_subcommand("read-teds", "Read a TEDS block from an NCAP");
    ConnectionFlags read_conn;
    read_conn.attach(*read_cmd);
    std::string read_ncap_id, read_app_id;
    int access_code = p1451::teds::kSecurityTedsAccessCode;
    long offset = 0;
    double timeout_s = 2.0;
    read_cmd->add_option("--ncap-id", read_ncap_id, "Target NCAP id, 32 hex characters")
        ->required();
    read_cmd->add_option("--app-id", read_app_id, "APP id (default: random)");
    read_cmd->add_option("--access-code", access_code, "TEDS access code")
        ->capture_default_str();
    read_cmd->add_option("--offset", offset, "TEDS read offset")->capture_default_str();
    read_cmd->add_option("--timeout", timeout_s, "Reply timeout in seconds")
        ->capture_default_str();

    // acl-update
    auto* update_cmd = app.add_subcommand("acl-update", "Send an ACL update to MQTT-ACS");
    ConnectionFlags update_conn;
    update_conn.attach(*update_cmd);
    std::string token, op = "add", user, access = "read", topic;
    double result_timeout_s = 5.0;
    update_cmd->add_option("--token", token, "Access token")->required();
    update_cmd->add_option("--op", op, "add or remove")->capture_default_str();
    update_cmd->add_option("--user", user, "Username the rule applies to")->required();
    update_cmd->add_option("--access", access, "read, write or readwrite")
        ->capture_default_str();
    update_cmd->add_option("--topic", topic, "Topic filter for the rule")->required();
    update_cmd->add_option("--result-timeout", result_timeout_s, "Result wait in seconds")
        ->capture_default_str();

    // encode-teds / decode-teds
    auto* encode_cmd = app.add_subcommand("encode-teds", "Encode a TEDS description to octets");
    std::string encode_in, encode_out;
    encode_cmd->add_option("description", encode_in, "TEDS description file")->required();
    encode_cmd->add_option("output", encode_out, "Output octet file")->required();

    auto* decode_cmd = app.add_subcommand("decode-teds", "Decode and print a TEDS octet file");
    std::string decode_in;
    decode_cmd->add_option("input", decode_in, "TEDS octet file")->required();

    CLI11_PARSE(app, argc, argv);

    if (broker_cmd->parsed())
        return run_broker(listen, level, passwords, acl, tls_cert, tls_key, acl_poll_ms);
    if (ncap_cmd->parsed()) return run_ncap(ncap_conn, ncap_id_hex, ncap_teds);
    if (acs_cmd->parsed()) return run_acs(acs_conn, tokens_path, acs_acl_path);
    if (read_cmd->parsed())
        return run_read_teds(read_conn, read_ncap_id, read_app_id, access_code, offset, timeout_s);
    if (update_cmd->parsed())
        return run_acl_update(update_conn, token, op, user, access, topic, result_timeout_s);
    if (encode_cmd->parsed()) return run_encode_teds(encode_in, encode_out);
    if (decode_cmd->parsed()) return run_decode_teds(decode_in);
    return exit_error;
}
