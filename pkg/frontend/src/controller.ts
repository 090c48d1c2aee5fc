import { NegotiationApi, ServiceError } from "./api.js";
import {
  applySnapshot,
  applyTurn,
  clearError,
  initialView,
  setError,
  type UiSessionView,
} from "./state.js";
import { render } from "./view.js";
import type { TurnResponse } from "./types.js";

/**
 * Wires the API client, view state, and DOM together for one session.
 *
 * All deal numbers come from service responses; the controller only
 * forwards user actions and re-renders.
 */
export class SessionController {
  view!: UiSessionView;

  constructor(
    readonly api: NegotiationApi,
    readonly root: HTMLElement,
  ) {}

  async start(bundleId: string, config?: Record<string, number>): Promise<void> {
    try {
      const created = await this.api.createSession(bundleId, config);
      this.view = initialView(created);
      this.render();
    } catch (err) {
      this.root.innerHTML = `<div class="banner banner-error" data-testid="banner">${
        err instanceof ServiceError && err.status === 0
          ? "Cannot reach the negotiation service"
          : String(err)
      }</div>`;
      throw err;
    }
  }

  /** Offer an amount; while a deal awaits confirmation this acknowledges it. */
  async sendOffer(amount: number): Promise<void> {
    if (this.view.awaitingAcknowledge) {
      await this.acknowledge();
      return;
    }
    await this.postStructured({
      intents: ["Negotiate-Price-Decrease"],
      price_offer: amount,
    });
  }

  async toggleItem(itemId: string): Promise<void> {
    const active = this.view.activeItems.has(itemId);
    await this.postStructured({
      intents: [active ? "Negotiate-Remove-X" : "Negotiate-Add-X"],
      ops: [{ op: active ? "remove" : "add", id: itemId }],
    });
  }

  async accept(): Promise<void> {
    await this.postStructured({ intents: ["Accept"] });
  }

  async acknowledge(): Promise<void> {
    await this.postStructured({ intents: ["Acknowledge"] });
  }

  async reject(): Promise<void> {
    await this.postStructured({ intents: ["Reject"] });
  }

  /** Free-text turn; low-confidence classification surfaces as a prompt to
   * use the structured controls instead. */
  async sendText(text: string): Promise<void> {
    if (!text.trim()) {
      return;
    }
    try {
      const response = await this.api.postTextTurn(this.view.sessionId, text);
      this.applyResponse(response);
    } catch (err) {
      if (err instanceof ServiceError && err.code === "low_confidence") {
        setError(
          this.view,
          "I couldn't tell what you meant - try the buttons instead.",
        );
      } else {
        setError(this.view, err instanceof Error ? err.message : String(err));
      }
    }
    this.render();
  }

  private async postStructured(
    turn: Parameters<NegotiationApi["postStructuredTurn"]>[1],
  ): Promise<void> {
    try {
      const response = await this.api.postStructuredTurn(
        this.view.sessionId,
        turn,
      );
      clearError(this.view);
      this.applyResponse(response);
    } catch (err) {
      setError(this.view, err instanceof Error ? err.message : String(err));
    }
    this.render();
  }

  private applyResponse(response: TurnResponse): void {
    applyTurn(this.view, response.customer_turn);
    if (response.agent_turn) {
      applyTurn(this.view, response.agent_turn);
    }
    applySnapshot(this.view, response.snapshot);
  }

  render(): void {
    render(this.view, this.root);
    this.bindControls();
  }

  private bindControls(): void {
    const offerInput = this.root.querySelector<HTMLInputElement>(
      '[data-testid="offer-input"]',
    );
    this.root
      .querySelector('[data-testid="offer-button"]')
      ?.addEventListener("click", () => {
        const amount = Number(offerInput?.value);
        if (this.view.awaitingAcknowledge || Number.isFinite(amount)) {
          void this.sendOffer(amount);
        }
      });
    this.root
      .querySelector('[data-testid="accept-button"]')
      ?.addEventListener("click", () => void this.accept());
    this.root
      .querySelector('[data-testid="reject-button"]')
      ?.addEventListener("click", () => void this.reject());
    const textInput = this.root.querySelector<HTMLInputElement>(
      '[data-testid="text-input"]',
    );
    this.root
      .querySelector('[data-testid="text-button"]')
      ?.addEventListener("click", () => void this.sendText(textInput?.value ?? ""));
    for (const box of this.root.querySelectorAll<HTMLInputElement>(
      "input[data-item-id]",
    )) {
      box.addEventListener("change", () => {
        const id = box.dataset.itemId;
        if (id) {
          void this.toggleItem(id);
        }
      });
    }
  }
}
