#pragma once

#include <deque>
#include <mutex>
#include <unordered_map>

#include "facts/tag.hpp"

namespace facts {

/// In-process stand-in for the end-to-end encrypted messaging system: an
/// authenticated channel that delivers (tag, message) verbatim between
/// clients. Records the metadata a real EEMS server would see (sender,
/// recipient, payload size) so tests can check what the transport leaks.
class EemsBus {
 public:
  struct Delivery {
    std::string from;
    Bytes tag_bytes;
    Bytes message;
  };

  struct TranscriptEntry {
    std::string from;
    std::string to;
    std::size_t payload_size = 0;  // |(tag, x)|
  };

  void send(std::string_view from, std::string_view to, ByteView tag_bytes, ByteView message) {
    std::lock_guard<std::mutex> lk(mu_);
    transcript_.push_back({std::string(from), std::string(to), tag_bytes.size() + message.size()});
    inboxes_[std::string(to)].push_back(
        {std::string(from), Bytes(tag_bytes.begin(), tag_bytes.end()),
         Bytes(message.begin(), message.end())});
  }

  std::optional<Delivery> receive(std::string_view to) {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = inboxes_.find(std::string(to));
    if (it == inboxes_.end() || it->second.empty()) return std::nullopt;
    Delivery d = std::move(it->second.front());
    it->second.pop_front();
    return d;
  }

  std::vector<TranscriptEntry> transcript() const {
    std::lock_guard<std::mutex> lk(mu_);
    return transcript_;
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::deque<Delivery>> inboxes_;
  std::vector<TranscriptEntry> transcript_;
};

}  // namespace facts
