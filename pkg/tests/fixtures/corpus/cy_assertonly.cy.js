describe("status page", () => {
  it("shows all systems green", () => {
    cy.get("[data-status]").should("have.length", 4);
    cy.get(".uptime").should(($el) => {
      expect($el.text()).to.match(/99\.\d+%/);
    });
    cy.contains("operational");
  });
});
