describe("awkward", () => {
  it("passes a command to a helper", () => {
    wrap(cy.get("#inner").click());
    cy.visit("/after");
  });
  it("omits the semicolon", () => {
    cy.get("#loose").click()
  });
});
