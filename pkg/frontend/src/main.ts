import { ApiClient } from "./api.js";
import { attachKeyboard } from "./keyboard.js";
import { ReviewStore } from "./state.js";
import { render } from "./views.js";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  const api = new ApiClient();
  let videoId = new URLSearchParams(window.location.search).get("video");
  if (!videoId) {
    const videos = await api.listVideos();
    if (videos.length === 0) {
      root.textContent = "no videos in this run";
      return;
    }
    videoId = videos[0].video_id;
  }

  const store = new ReviewStore(api, videoId);
  store.subscribe(() => render(root, store));
  attachKeyboard(store, document);
  window.addEventListener("online", () => void store.retryUnsynced());
  await store.load();
}

void boot();
