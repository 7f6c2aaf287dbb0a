#include "execstream/server.hpp"

#include <filesystem>

#include "execstream/errors.hpp"

namespace execstream {

BlockServer::BlockServer(ServerConfig config, ActionStore store)
    : config_(config), predictor_(config.predictor, std::move(store)), provider_(config.provider) {}

void BlockServer::add_image(ImagePtr image) {
  if (image->block_size() != config_.block_size) {
    throw ConfigError("image '" + image->name() + "' block size differs from server block size");
  }
  provider_.add_image(std::move(image));
}

std::size_t BlockServer::load_image_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) throw std::runtime_error("cannot read image directory '" + dir + "': " + ec.message());
  std::size_t n = 0;
  for (const auto& entry : it) {
    if (!entry.is_regular_file() || entry.path().extension() != ".img") continue;
    add_image(ExecutableImage::open_file(entry.path().string(), entry.path().stem().string(),
                                         config_.block_size));
    ++n;
  }
  return n;
}

PreloadReport BlockServer::initialize() { return provider_.init_preload(predictor_.store()); }

void BlockServer::adopt(const std::vector<ActionPtr>& created) {
  for (const auto& a : created) {
    if (provider_.image(a->executable)) provider_.preload_action(*a);
  }
}

ServedResponse BlockServer::handle(const wire::RequestFrame& request, Micros now) {
  ++requests_;
  ServedResponse out;
  if (request.type == wire::RequestType::end_run) {
    if (auto a = predictor_.finish_session(request.token, request.executable, now)) adopt({*a});
    out.state_change = "session finished";
    if (observer_) observer_(request, out);
    return out;
  }

  auto img = provider_.image(request.executable);
  if (!img) {
    out.frame.status = wire::Status::unknown_executable;
    if (observer_) observer_(request, out);
    return out;
  }
  if (request.block >= img->total_blocks()) {
    out.frame.status = wire::Status::out_of_range;
    if (observer_) observer_(request, out);
    return out;
  }

  auto decision = predictor_.handle_request(request.token, request.executable, request.block, now);
  adopt(decision.new_actions);

  std::vector<BlockIndex> blocks;
  blocks.reserve(decision.respond_blocks.size());
  for (auto b : decision.respond_blocks) {
    if (b < img->total_blocks()) blocks.push_back(b);
  }
  if (blocks.size() > wire::kMaxBlocksPerResponse) blocks.resize(wire::kMaxBlocksPerResponse);

  auto readout = provider_.read_blocks(request.executable, blocks);
  out.memcache_reads = readout.memcache_reads;
  out.backing_reads = readout.backing_reads;
  out.frame.blocks.reserve(readout.blocks.size());
  for (auto& r : readout.blocks) out.frame.blocks.push_back({r.index, std::move(r.data)});

  out.served = decision.served;
  out.state_change = std::move(decision.state_change);
  if (decision.served && decision.served_action) {
    out.prefetch_scheduled = provider_.runtime_prefetch(decision.served_action, decision.served->segment);
  }
  if (config_.drain_after_response) provider_.drain();
  if (observer_) observer_(request, out);
  return out;
}

std::vector<ActionPtr> BlockServer::expire(Micros now) {
  auto created = predictor_.expire(now);
  adopt(created);
  return created;
}

std::vector<ActionPtr> BlockServer::finalize_all() {
  auto created = predictor_.finalize_all();
  adopt(created);
  return created;
}

void BlockServer::drop_memcache() { provider_.drop_memcache(); }

}  // namespace execstream
