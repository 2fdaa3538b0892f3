#include "lexeval/util.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "lexeval/error.hpp"

namespace lexeval {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &digest_len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string case_fold(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      out.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    // UTF-8 mappings for A-umlaut, O-umlaut, U-umlaut (0xC384->0xC3A4 etc.)
    // and capital sharp s (0xE1BA9E -> 0xC39F).
    if (c == 0xC3 && i + 1 < text.size()) {
      unsigned char d = static_cast<unsigned char>(text[i + 1]);
      if (d == 0x84 || d == 0x96 || d == 0x9C) {
        out.push_back(static_cast<char>(0xC3));
        out.push_back(static_cast<char>(d + 0x20));
        ++i;
        continue;
      }
    }
    if (c == 0xE1 && i + 2 < text.size() &&
        static_cast<unsigned char>(text[i + 1]) == 0xBA &&
        static_cast<unsigned char>(text[i + 2]) == 0x9E) {
      out.push_back(static_cast<char>(0xC3));
      out.push_back(static_cast<char>(0x9F));
      i += 2;
      continue;
    }
    out.push_back(static_cast<char>(c));
  }
  return out;
}

std::string_view trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return text.substr(begin, end - begin);
}

bool starts_with(std::string_view text, std::string_view prefix) {
  return text.size() >= prefix.size() && text.substr(0, prefix.size()) == prefix;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open file: " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write file: " + path.string());
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw DataError("write failed: " + path.string());
  }
}

void for_each_line(const std::filesystem::path& path,
                   const std::function<void(int, std::string_view)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open file: " + path.string());
  }
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (trim(line).empty()) {
      continue;
    }
    fn(number, line);
  }
}

std::string sanitize_for_path(std::string_view id) {
  std::string out;
  out.reserve(id.size());
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('_');
    }
  }
  return out;
}

std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_full(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string format_2dp(double value) {
  // Half-up in decimal terms: the epsilon keeps values like 0.315 (stored just
  // below 31.5 hundredths) rounding to .32 as a reader would expect.
  long hundredths = std::llround(std::abs(value) * 100.0 + 1e-9);
  long whole = hundredths / 100;
  long frac = hundredths % 100;
  std::string out = value < 0 && hundredths != 0 ? "-" : "";
  if (whole != 0) {
    out += std::to_string(whole);
  }
  out += '.';
  if (frac < 10) out += '0';
  out += std::to_string(frac);
  return out;
}

}  // namespace lexeval
