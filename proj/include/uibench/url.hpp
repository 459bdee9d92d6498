#pragma once

#include <string>
#include <string_view>

#include "uibench/error.hpp"

namespace uibench {

struct Url {
  std::string scheme;       // http | https
  std::string host_port;    // host[:port]
  std::string path_prefix;  // no trailing slash; may be empty

  std::string origin() const { return scheme + "://" + host_port; }
};

inline Url parse_url(std::string_view text) {
  const auto sep = text.find("://");
  if (sep == std::string_view::npos) throw Error(ErrorCode::ConfigError, "not an absolute URL: " + std::string(text));
  Url url;
  url.scheme = std::string(text.substr(0, sep));
  if (url.scheme != "http" && url.scheme != "https") {
    throw Error(ErrorCode::ConfigError, "unsupported URL scheme: " + url.scheme);
  }
  std::string_view rest = text.substr(sep + 3);
  const auto slash = rest.find('/');
  url.host_port = std::string(rest.substr(0, slash));
  if (url.host_port.empty()) throw Error(ErrorCode::ConfigError, "URL has no host: " + std::string(text));
  if (slash != std::string_view::npos) url.path_prefix = std::string(rest.substr(slash));
  while (!url.path_prefix.empty() && url.path_prefix.back() == '/') url.path_prefix.pop_back();
  return url;
}

}  // namespace uibench
