/** Keyboard-first review: classification time dominates the manual work,
 * so the frequent path (next card, digit = species) never leaves home row.
 *
 *   j / ArrowRight   next card        k / ArrowLeft   previous card
 *   1..9             classify selected card with the nth species
 *   x / Delete       reject selected card
 *   r                retry unsynced writes
 */

import { ReviewStore } from "./state.js";

export function attachKeyboard(store: ReviewStore, target: Document): () => void {
  const handler = (event: KeyboardEvent) => {
    if (event.target instanceof HTMLInputElement) return; // typing a species
    const card = store.selectedCard;
    switch (event.key) {
      case "j":
      case "ArrowRight":
        store.moveSelection(1);
        break;
      case "k":
      case "ArrowLeft":
        store.moveSelection(-1);
        break;
      case "x":
      case "Delete":
        if (card) void store.reject(card);
        break;
      case "r":
        void store.retryUnsynced();
        break;
      default: {
        const digit = Number(event.key);
        if (card && Number.isInteger(digit) && digit >= 1 && digit <= 9) {
          const species = store.species[digit - 1];
          if (species !== undefined) void store.classify(card, species);
        }
      }
    }
  };
  target.addEventListener("keydown", handler);
  return () => target.removeEventListener("keydown", handler);
}
