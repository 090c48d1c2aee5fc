import { controlsEnabled, type UiSessionView } from "./state.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function formatPrice(price: number): string {
  return `$${price}`;
}

function bannerHtml(view: UiSessionView): string {
  switch (view.banner.kind) {
    case "accepted":
      return `<div class="banner banner-accepted" data-testid="banner">Deal accepted${
        view.banner.finalPrice !== null
          ? ` at ${formatPrice(view.banner.finalPrice)}`
          : ""
      }</div>`;
    case "rejected":
      return `<div class="banner banner-rejected" data-testid="banner">Negotiation ended without a deal</div>`;
    case "error":
      return `<div class="banner banner-error" data-testid="banner">${escapeHtml(
        view.banner.message,
      )}</div>`;
    default:
      return `<div class="banner banner-none" data-testid="banner"></div>`;
  }
}

function transcriptHtml(view: UiSessionView): string {
  const rows = view.transcript
    .map((turn, i) => {
      const badges = turn.intents
        .map((name) => `<span class="badge">${escapeHtml(name)}</span>`)
        .join("");
      const price =
        turn.price !== null
          ? `<span class="turn-price">${formatPrice(turn.price)}</span>`
          : "";
      return `<li class="turn turn-${turn.speaker}" data-turn-index="${i}">
        <span class="speaker">${turn.speaker}</span>${badges}${price}
        <p class="utterance">${escapeHtml(turn.text)}</p>
      </li>`;
    })
    .join("");
  return `<ol class="transcript" data-testid="transcript">${rows}</ol>`;
}

function bundleHtml(view: UiSessionView): string {
  const disabled = controlsEnabled(view) ? "" : " disabled";
  const rows = view.items
    .map((item) => {
      const active = view.activeItems.has(item.id);
      const isMain = item.kind === "main";
      return `<li class="item">
        <label>
          <input type="checkbox" data-item-id="${escapeHtml(item.id)}"
            ${active ? "checked" : ""}${isMain ? " disabled" : disabled}>
          ${escapeHtml(item.name)} <span class="item-price">${formatPrice(item.price)}</span>
        </label>
      </li>`;
    })
    .join("");
  return `<div class="bundle" data-testid="bundle">
    <h2>Bundle</h2>
    <ul>${rows}</ul>
    <p class="asking" data-testid="asking">Current asking: ${formatPrice(view.sellerPrice)}</p>
  </div>`;
}

function priceHistoryHtml(view: UiSessionView): string {
  const points = view.priceHistory
    .map(
      (p) =>
        `<li class="point point-${p.speaker}">${p.speaker}: ${formatPrice(p.price)}</li>`,
    )
    .join("");
  return `<ul class="price-history" data-testid="price-history">${points}</ul>`;
}

function controlsHtml(view: UiSessionView): string {
  const disabled = controlsEnabled(view) ? "" : " disabled";
  const offerLabel = view.awaitingAcknowledge ? "Confirm deal" : "Send offer";
  return `<div class="controls" data-testid="controls">
    <input type="number" data-testid="offer-input" placeholder="Your offer"${disabled}>
    <button data-testid="offer-button"${disabled}>${offerLabel}</button>
    <button data-testid="accept-button"${disabled}>Accept asking</button>
    <button data-testid="reject-button"${disabled}>Walk away</button>
    <input type="text" data-testid="text-input" placeholder="Or just say it..."${disabled}>
    <button data-testid="text-button"${disabled}>Send</button>
  </div>`;
}

/** Render the whole session view into `root` (full re-render per update). */
export function render(view: UiSessionView, root: HTMLElement): void {
  root.innerHTML = `
    ${bannerHtml(view)}
    <div class="layout">
      ${bundleHtml(view)}
      <div class="conversation">
        ${transcriptHtml(view)}
        ${controlsHtml(view)}
      </div>
      ${priceHistoryHtml(view)}
    </div>`;
}
