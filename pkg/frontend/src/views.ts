/** DOM rendering. Everything on screen is a function of the store; the
 * whole app re-renders on each store change (galleries are small).
 */

import { CardState, Filter, ReviewStore } from "./state.js";

const FILTERS: Filter[] = ["all", "unreviewed", "labeled", "rejected"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function verdictChip(card: CardState): HTMLElement {
  if (card.write === "saving") {
    return el("span", "chip chip-saving", "saving…");
  }
  if (card.write === "unsynced") {
    return el("span", "chip chip-unsynced", "unsynced – will retry");
  }
  if (card.verdict === null) {
    return el("span", "chip chip-unreviewed", "unreviewed");
  }
  if (card.verdict.verdict === "rejected") {
    return el("span", "chip chip-rejected", "rejected");
  }
  return el("span", "chip chip-labeled", card.verdict.species ?? "");
}

function renderCard(store: ReviewStore, card: CardState, isSelected: boolean): HTMLElement {
  const root = el("article", "card" + (isSelected ? " card-selected" : ""));
  root.dataset.trackId = String(card.track.track_id);

  const img = el("img", "card-image");
  img.src = card.track.image_url;
  img.alt = `track ${card.track.track_id}`;
  root.appendChild(img);

  const meta = el("div", "card-meta");
  meta.appendChild(el("span", "card-id", `#${card.track.track_id}`));
  meta.appendChild(el("span", undefined, `${card.track.span_s.toFixed(1)} s`));
  meta.appendChild(el("span", undefined, `conf ${card.track.max_confidence.toFixed(2)}`));
  meta.appendChild(verdictChip(card));
  root.appendChild(meta);

  const controls = el("div", "card-controls");
  const input = el("input", "species-input") as HTMLInputElement;
  input.placeholder = "species…";
  input.setAttribute("list", "species-options");
  input.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && input.value.trim() !== "") {
      void store.classify(card, input.value.trim());
      event.stopPropagation();
    }
  });
  controls.appendChild(input);

  const saveBtn = el("button", "btn", "label");
  saveBtn.addEventListener("click", () => {
    if (input.value.trim() !== "") void store.classify(card, input.value.trim());
  });
  controls.appendChild(saveBtn);

  const rejectBtn = el("button", "btn btn-reject", "reject");
  rejectBtn.addEventListener("click", () => void store.reject(card));
  controls.appendChild(rejectBtn);
  root.appendChild(controls);

  if (card.error) {
    root.appendChild(el("p", "card-error", card.error));
  }
  return root;
}

function renderMaxnPanel(store: ReviewStore): HTMLElement {
  const panel = el("section", "maxn-panel");
  panel.appendChild(el("h2", undefined, "ssMaxN"));
  const table = el("table", "maxn-table");
  const head = el("tr");
  for (const title of ["species", "maxn", "frame", "time (ms)"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  for (const row of store.maxn) {
    const tr = el("tr");
    tr.appendChild(el("td", undefined, row.species));
    tr.appendChild(el("td", undefined, String(row.maxn)));
    tr.appendChild(el("td", undefined, String(row.frame_index_at_max)));
    tr.appendChild(el("td", undefined, String(row.time_ms_at_max)));
    table.appendChild(tr);
  }
  if (store.maxn.length === 0) {
    const tr = el("tr");
    const td = el("td", "maxn-empty", "no labeled tracks yet");
    td.colSpan = 4;
    tr.appendChild(td);
    table.appendChild(tr);
  }
  panel.appendChild(table);
  return panel;
}

export function render(root: HTMLElement, store: ReviewStore): void {
  root.textContent = "";

  if (store.banner !== null) {
    const banner = el("div", "banner");
    banner.appendChild(el("span", undefined, store.banner));
    const retry = el("button", "btn", "retry");
    retry.addEventListener("click", () => {
      void (store.loaded ? store.retryUnsynced().then(() => store.refreshMaxn()) : store.load());
    });
    banner.appendChild(retry);
    root.appendChild(banner);
  }

  const header = el("header", "header");
  header.appendChild(el("h1", undefined, `review: ${store.videoId}`));
  const progress = store.progress;
  header.appendChild(
    el("span", "progress", `${progress.reviewed}/${progress.total} reviewed`),
  );
  const filters = el("nav", "filters");
  for (const f of FILTERS) {
    const btn = el("button", "btn" + (store.filter === f ? " btn-active" : ""), f);
    btn.addEventListener("click", () => store.setFilter(f));
    filters.appendChild(btn);
  }
  header.appendChild(filters);
  root.appendChild(header);

  const datalist = el("datalist");
  datalist.id = "species-options";
  for (const s of store.species) {
    const option = el("option");
    option.value = s;
    datalist.appendChild(option);
  }
  root.appendChild(datalist);

  const grid = el("main", "grid");
  const start = store.page * store.pageSize;
  store.pageCards.forEach((card, i) => {
    grid.appendChild(renderCard(store, card, start + i === store.selected));
  });
  root.appendChild(grid);

  root.appendChild(renderMaxnPanel(store));

  const footer = el("footer", "pager");
  const prev = el("button", "btn", "‹ prev");
  prev.disabled = store.page === 0;
  prev.addEventListener("click", () => store.setPage(store.page - 1));
  footer.appendChild(prev);
  footer.appendChild(
    el("span", "pager-label", `page ${store.page + 1} / ${store.pageCount}`),
  );
  const next = el("button", "btn", "next ›");
  next.disabled = store.page >= store.pageCount - 1;
  next.addEventListener("click", () => store.setPage(store.page + 1));
  footer.appendChild(next);
  root.appendChild(footer);
}
