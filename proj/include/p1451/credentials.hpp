#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include <openssl/sha.h>

#include <p1451/common.hpp>

namespace p1451::auth {

// Password file: one `username:hexsalt:hexhash` per line, where the hash is
// SHA-256 over salt octets, an ASCII ':', then the password octets.

struct Credential {
    std::string username;
    Bytes salt;
    Bytes password_hash;  // 32 octets

    bool operator==(const Credential&) const = default;
};

inline Bytes hash_password(BytesView salt, std::string_view password) {
    Bytes input(salt.begin(), salt.end());
    input.push_back(':');
    input.insert(input.end(), password.begin(), password.end());
    Bytes digest(SHA256_DIGEST_LENGTH);
    SHA256(input.data(), input.size(), digest.data());
    return digest;
}

inline Credential make_credential(std::string username, std::string_view password, Bytes salt) {
    Credential c;
    c.username = std::move(username);
    c.password_hash = hash_password(salt, password);
    c.salt = std::move(salt);
    return c;
}

class CredentialStore {
public:
    static Result<CredentialStore> parse(std::string_view text) {
        CredentialStore store;
        std::size_t line_no = 0;
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t eol = text.find('\n', start);
            std::string_view line = eol == std::string_view::npos
                                        ? text.substr(start)
                                        : text.substr(start, eol - start);
            start = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty() || line.front() == '#') continue;

            auto fail = [&](std::string why) {
                return make_error(Errc::parse_error,
                                  "line " + std::to_string(line_no) + ": " + std::move(why));
            };
            std::size_t c1 = line.find(':');
            std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(':', c1 + 1);
            if (c1 == std::string_view::npos || c2 == std::string_view::npos)
                return fail("expected username:hexsalt:hexhash");
            std::string username(line.substr(0, c1));
            if (username.empty()) return fail("empty username");
            auto salt = from_hex(line.substr(c1 + 1, c2 - c1 - 1));
            if (!salt) return fail("bad salt hex");
            auto hash = from_hex(line.substr(c2 + 1));
            if (!hash || hash->size() != SHA256_DIGEST_LENGTH) return fail("bad hash hex");
            if (store.by_user_.count(username)) return fail("duplicate username " + username);
            store.by_user_.emplace(username,
                                   Credential{username, std::move(*salt), std::move(*hash)});
        }
        return store;
    }

    static Result<CredentialStore> load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) return make_error(Errc::io_error, "cannot open " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    void add(Credential c) { by_user_[c.username] = std::move(c); }

    bool verify(std::string_view username, std::string_view password) const {
        auto it = by_user_.find(std::string(username));
        if (it == by_user_.end()) return false;
        return hash_password(it->second.salt, password) == it->second.password_hash;
    }

    bool contains(std::string_view username) const {
        return by_user_.count(std::string(username)) > 0;
    }

    std::size_t size() const { return by_user_.size(); }

    std::string serialize() const {
        std::string out;
        for (const auto& [name, cred] : by_user_) {
            out += name;
            out += ':';
            out += to_hex(cred.salt);
            out += ':';
            out += to_hex(cred.password_hash);
            out += '\n';
        }
        return out;
    }

private:
    std::map<std::string, Credential, std::less<>> by_user_;
};

}  // namespace p1451::auth
