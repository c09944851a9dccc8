/** Review session state.
 *
 * The two hard rules live here:
 *  - a verdict is shown as saved only after the server acknowledged it
 *    (no optimistic rendering of verdicts), and
 *  - the MaxN panel is always a verbatim render of the last server
 *    response, never computed locally.
 */

import { ApiClient, ApiError, MaxnRow, SPECIES_RE, TrackSummary } from "./api.js";

export interface Verdict {
  verdict: "labeled" | "rejected";
  species?: string;
}

export type WriteState = "idle" | "saving" | "unsynced";

export interface CardState {
  track: TrackSummary;
  /** Last server-acknowledged verdict (null = unreviewed). */
  verdict: Verdict | null;
  write: WriteState;
  /** Verdict currently being written or queued for retry. */
  pending: Verdict | null;
  /** Inline validation/error message for this card. */
  error: string | null;
}

export type Filter = "all" | "unreviewed" | "labeled" | "rejected";

export const PAGE_SIZE = 10;

export class ReviewStore {
  cards: CardState[] = [];
  maxn: MaxnRow[] = [];
  species: string[] = [];
  filter: Filter = "all";
  page = 0;
  pageSize = PAGE_SIZE;
  selected = 0;
  banner: string | null = null;
  loaded = false;

  private listeners: Array<() => void> = [];

  constructor(
    readonly api: ApiClient,
    readonly videoId: string,
  ) {}

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  async load(): Promise<void> {
    try {
      const [tracks, species, maxn] = await Promise.all([
        this.api.listTracks(this.videoId),
        this.api.getSpecies(),
        this.api.getMaxn(this.videoId),
      ]);
      this.cards = tracks.map((track) => ({
        track,
        verdict:
          track.verdict === null
            ? null
            : track.verdict === "rejected"
              ? { verdict: "rejected" }
              : { verdict: "labeled", species: track.species ?? undefined },
        write: "idle",
        pending: null,
        error: null,
      }));
      this.species = species;
      this.maxn = maxn;
      this.banner = null;
      this.loaded = true;
    } catch (err) {
      // keep whatever is on screen; the banner offers a retry
      this.banner = `service unreachable: ${(err as Error).message}`;
    }
    this.emit();
  }

  get filtered(): CardState[] {
    switch (this.filter) {
      case "all":
        return this.cards;
      case "unreviewed":
        return this.cards.filter((c) => c.verdict === null);
      case "labeled":
        return this.cards.filter((c) => c.verdict?.verdict === "labeled");
      case "rejected":
        return this.cards.filter((c) => c.verdict?.verdict === "rejected");
    }
  }

  get pageCount(): number {
    return Math.max(1, Math.ceil(this.filtered.length / this.pageSize));
  }

  get pageCards(): CardState[] {
    const start = this.page * this.pageSize;
    return this.filtered.slice(start, start + this.pageSize);
  }

  get progress(): { reviewed: number; total: number } {
    return {
      reviewed: this.cards.filter((c) => c.verdict !== null).length,
      total: this.cards.length,
    };
  }

  get selectedCard(): CardState | null {
    return this.filtered[this.selected] ?? null;
  }

  setFilter(filter: Filter): void {
    this.filter = filter;
    this.page = 0;
    this.selected = 0;
    this.emit();
  }

  setPage(page: number): void {
    this.page = Math.min(Math.max(page, 0), this.pageCount - 1);
    this.selected = this.page * this.pageSize;
    this.emit();
  }

  moveSelection(delta: number): void {
    const n = this.filtered.length;
    if (n === 0) return;
    this.selected = Math.min(Math.max(this.selected + delta, 0), n - 1);
    this.page = Math.floor(this.selected / this.pageSize);
    this.emit();
  }

  classify(card: CardState, species: string): Promise<void> {
    if (!SPECIES_RE.test(species)) {
      card.error = `invalid species ${JSON.stringify(species)}: use lowercase words joined by _`;
      this.emit();
      return Promise.resolve();
    }
    return this.submit(card, { verdict: "labeled", species });
  }

  reject(card: CardState): Promise<void> {
    return this.submit(card, { verdict: "rejected" });
  }

  private async submit(card: CardState, verdict: Verdict): Promise<void> {
    card.write = "saving";
    card.pending = verdict;
    card.error = null;
    this.emit();
    try {
      await this.api.putAnnotation(card.track.video_id, card.track.track_id, {
        verdict: verdict.verdict,
        ...(verdict.species !== undefined ? { species: verdict.species } : {}),
      });
    } catch (err) {
      if (err instanceof ApiError) {
        // the server rejected the content; surface it inline, nothing to retry
        card.write = "idle";
        card.pending = null;
        card.error = err.message;
      } else {
        // network failure: keep the verdict queued and visibly unsynced
        card.write = "unsynced";
        card.error = "not saved: service unreachable";
      }
      this.emit();
      return;
    }
    card.verdict = verdict; // acknowledged: only now it renders as saved
    card.write = "idle";
    card.pending = null;
    this.emit();
    await this.refreshMaxn();
  }

  /** Re-issue every queued verdict; wired to the reconnect event. */
  async retryUnsynced(): Promise<void> {
    const queued = this.cards.filter((c) => c.write === "unsynced" && c.pending !== null);
    for (const card of queued) {
      await this.submit(card, card.pending as Verdict);
    }
  }

  async refreshMaxn(): Promise<void> {
    try {
      this.maxn = await this.api.getMaxn(this.videoId);
      this.banner = null;
    } catch (err) {
      this.banner = `service unreachable: ${(err as Error).message}`;
    }
    this.emit();
  }
}
